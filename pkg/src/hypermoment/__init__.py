"""Anisotropic Hermite moment systems with hyperbolic regularization.

Subpackages follow the pipeline: multi-index bookkeeping (index), Hermite
machinery (hermite), moment states and collision targets (state), transport
matrix assembly and regularization (assembly), closed-form spectra and
eigenvectors (spectral), wave analysis (riemann), and the 1D finite-volume
solver with its kinetic reference (solver).
"""

from . import index, hermite, state, assembly, spectral, riemann, solver, cli

__all__ = [
    "index",
    "hermite",
    "state",
    "assembly",
    "spectral",
    "riemann",
    "solver",
    "cli",
]
__version__ = "0.1.0"
