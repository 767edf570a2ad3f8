"""PISCO: parallel-imaging-inspired self-consistency for k-space optimization."""

__version__ = "0.1.0"
