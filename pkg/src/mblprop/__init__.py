"""Exact-diagonalisation laboratory for information propagation in many-body localised spin chains."""
from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .operators import Lattice, Region

__version__ = "0.1.0"
__all__ = ["BACKEND", "Lattice", "Region", "__version__"]
