# Q_Bridge Package

__version__ = "0.1.0"
