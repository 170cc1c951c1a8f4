"""Scalarised multi-objective Q-learning for VNF resource profiling on a surrogate testbed."""

__version__ = "0.1.0"
