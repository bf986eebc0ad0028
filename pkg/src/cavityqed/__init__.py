"""Cavity QED with optically transported atoms: parameters, traps, bistability, transport and estimation."""

__version__ = "0.1.0"
