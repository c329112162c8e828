"""Numerical laboratory for Hormander operators with drift: charts, Taylor jets, kernels, Schauder iterations."""

__version__ = "0.1.0"
