"""Numerical checks of local large deviation envelopes for heavy-tailed sums and Birkhoff sums."""

__version__ = "0.1.0"
