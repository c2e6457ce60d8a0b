"""Transfer underwater image classifications onto aerial orthophoto tiles."""

__version__ = "0.1.0"
