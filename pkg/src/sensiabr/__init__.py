"""Sensitivity-aware adaptive-bitrate streaming toolkit."""
__version__ = "0.1.0"
