"""Kinetic Ising lattices under discrete Glauber relaxation, and a
from-scratch CNN that reconstructs the lattice connectivity from a single
evolution instance."""

__version__ = "0.1.0"
