"""mvsim: 2D magnetoviscoelastic flow on a staggered grid, with stability diagnostics."""

from mvsim._backend import BACKEND
from mvsim.errors import (ConfigurationError, CounterexampleError, DegeneracyError, LoadError,
                          MVSimError, SolverError, StepFailure, StructuralError)
from mvsim.grid import FaceVector, Grid

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigurationError", "CounterexampleError", "DegeneracyError", "FaceVector",
    "Grid", "LoadError", "MVSimError", "SolverError", "StepFailure", "StructuralError",
]
