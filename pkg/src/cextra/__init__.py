"""Multipath-assisted MIMO channel extrapolation at desk scale."""

__version__ = "0.1.0"
