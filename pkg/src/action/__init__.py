# Time-symmetric stochastic actions
