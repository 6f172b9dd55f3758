"""Multi-output GP augmentation of multi-building, multi-floor RSSI fingerprints."""

__version__ = "0.1.0"
