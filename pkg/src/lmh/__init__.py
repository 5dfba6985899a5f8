"""Lifted Metropolis-Hastings inference for discrete graphical models."""

__version__ = "0.1.0"
