# Coupling tensors, Liouvillian expansion and phase-space models
