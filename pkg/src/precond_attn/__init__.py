"""Numerical laboratory for row-norm preconditioned self-attention."""

from .backend import BACKEND
from .errors import ContractError, InputError, NumericalError, ShapeError
from .matrix import Matrix

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ContractError",
    "InputError",
    "Matrix",
    "NumericalError",
    "ShapeError",
    "__version__",
]
