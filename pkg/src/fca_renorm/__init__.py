"""Renormalisation of fermionic cellular automata on wrapped 1-D lattices."""

__version__ = "0.1.0"
