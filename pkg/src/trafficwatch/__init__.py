"""Street congestion monitoring from vehicle-detection streams."""

__version__ = "0.1.0"
