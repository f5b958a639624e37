"""Spectral simulator and numerical probes for the generalized derivative
nonlinear Schrödinger equation ``u_t = i u_xx - |u|^(2 sigma) u_x`` on the
unit torus."""

from .dynamics import SolverParams, Termination, evolve, refinement_study
from .spectral import CutoffSpec, GridSpec, SpectralField

__all__ = [
    "CutoffSpec",
    "GridSpec",
    "SolverParams",
    "SpectralField",
    "Termination",
    "evolve",
    "refinement_study",
]
__version__ = "0.1.0"
