"""Data-driven balanced truncation with certified error bounds."""

__version__ = "0.1.0"
