"""Balanced POD and balanced truncation of linearized channel flow."""

__version__ = "0.1.0"
