"""Evolutionary multi-objective search for low-frequency spectral backdoor triggers."""

__version__ = "0.1.0"
