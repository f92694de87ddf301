"""Desk-scale four-finger delta hand simulator and imitation-learning stack."""

__version__ = "0.1.0"
