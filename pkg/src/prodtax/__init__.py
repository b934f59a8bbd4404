"""Two-level product title classification."""

__version__ = "0.1.0"
