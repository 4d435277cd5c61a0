# Shared data models and errors
