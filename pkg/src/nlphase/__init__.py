"""Nonlocal phase transitions with moving wells: kernels, profiles, fields."""

__version__ = "0.1.0"
