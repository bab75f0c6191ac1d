"""Distributional Jacobian minors, graph currents and coarea checks on sampled maps."""

__version__ = "0.1.0"
