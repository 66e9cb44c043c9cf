"""Extended surface-source modeling and inversion for 2D acoustics."""

from .errors import (CFLError, ConfigError, GeometryError, InstabilityError, ShapeMismatchError,
                     SolverBreakdown, XsrcError)
from .grid import (Gather, Grid2D, Medium, SourceVector, TimeAxis, gather_axpy, gather_dot,
                   resample_mute)

__version__ = "0.1.0"

__all__ = [
    "CFLError", "ConfigError", "GeometryError", "InstabilityError", "ShapeMismatchError",
    "SolverBreakdown", "XsrcError", "Gather", "Grid2D", "Medium", "SourceVector", "TimeAxis",
    "gather_axpy", "gather_dot", "resample_mute", "__version__",
]
