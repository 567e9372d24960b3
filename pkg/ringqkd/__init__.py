"""Desk-scale simulator of a micro-ring assisted DPS-QKD receiver."""

__version__ = "0.1.0"

__all__ = ["__version__"]
