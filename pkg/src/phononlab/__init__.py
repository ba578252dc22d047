"""Numerical laboratory for the linearized phonon Boltzmann equation."""
