"""elsort - external sorting of fixed-width records with a learned CDF model."""

__version__ = "1.0.0"
