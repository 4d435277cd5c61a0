# Extra-dimensional SPDE integration
