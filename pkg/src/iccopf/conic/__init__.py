"""Small dense second-order cone programming with dual certificates."""

from .kernels import BACKEND
from .solver import ConeProgram, ConeSolution, DimensionError, SocBlock, Status, solve

__all__ = [
    "BACKEND",
    "ConeProgram",
    "ConeSolution",
    "DimensionError",
    "SocBlock",
    "Status",
    "solve",
]
