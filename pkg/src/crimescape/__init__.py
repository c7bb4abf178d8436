"""Built-environment features from map tiles vs census-tract crime rates."""

__version__ = "0.1.0"
