"""Attribute-based file encryption with a simulated enclave runtime."""

__version__ = "1.0.0"
