# Trajectory ensembles, statistics and oracles
