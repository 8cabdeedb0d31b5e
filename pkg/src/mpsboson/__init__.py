"""Bosonic zero-point corrections around uniform matrix product states."""

from .models import SpinModel, aklt_state, blbq, heisenberg_staggered, make_model, neel_state
from .mps import TangentBasis, UniformMps, canonicalize, tangent_basis, transfer_spectrum

__version__ = "0.1.0"

__all__ = [
    "SpinModel",
    "TangentBasis",
    "UniformMps",
    "aklt_state",
    "blbq",
    "canonicalize",
    "heisenberg_staggered",
    "make_model",
    "neel_state",
    "tangent_basis",
    "transfer_spectrum",
]
