"""Handover simulation and analysis for dual-connectivity phantom-cell networks."""

__version__ = "0.1.0"
