"""Exact-diagonalization phase diagrams of the massless lattice Schwinger model and a
local implicit neural field that up-scales them."""

__version__ = "0.1.0"
