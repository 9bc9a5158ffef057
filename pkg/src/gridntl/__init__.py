"""Grid-based neighborhood features and scalable classifiers for NTL detection."""

__version__ = "0.1.0"
