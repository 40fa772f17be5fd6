"""Desk-scale active learning with adversarial distribution matching."""

__version__ = "0.1.0"
