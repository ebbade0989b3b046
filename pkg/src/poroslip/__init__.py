"""Periodic homogenization of a poroelastic composite with interface slip."""

__version__ = "0.1.0"
