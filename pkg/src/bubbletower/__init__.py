"""Bubble towers of the energy-critical heat equation u_t = Δu + |u|^{p-1}u."""
from ._kernels import BACKEND
from .errors import DomainError, NumericalFailure, StructuralFailure
from .radial import RadialField
from .soliton import Dimension

__all__ = ["BACKEND", "Dimension", "DomainError", "NumericalFailure", "RadialField",
           "StructuralFailure"]
__version__ = "0.1.0"
