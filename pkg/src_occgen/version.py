"""Version information for the occupancy ground-truth toolkit."""

__version__ = "1.0.0"
