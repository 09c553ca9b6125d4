"""Equilibrium states for uniformly hyperbolic model systems.

Reference measures on unstable leaves are built from Caratheodory dimension
structures weighted by e^{-nP + S_n phi}; averaged pushforwards of these
measures converge to the equilibrium state of phi, and the package provides
the pressure, measure, and dimension machinery to compute and verify that
construction on four model families.
"""
from hypeq import caratheodory, dimension, equilibrium, pressure, refmeasure, systems  # noqa: F401

__version__ = "0.1.0"
