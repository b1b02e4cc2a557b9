"""Weak-measurement correlators and apparent nonconservation in finite quantum models."""

__version__ = "0.1.0"
