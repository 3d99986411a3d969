"""Stochastic Fredholm / Volterra-Fredholm solvers built as unrolled fixed-point networks."""

__version__ = "0.1.0"
