"""Coupled natural gas and electricity markets: clearing, monitoring and strategic bidding."""

__version__ = "0.1.0"
