"""Homodyne sampling of truncated Fock states and continuous-variable Born machine training."""

__version__ = "0.1.0"
