"""Exception types shared across the package."""


class XsrcError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(XsrcError, ValueError):
    """Two gathers (or a gather and an operator) disagree on an axis."""

    def __init__(self, axis, left, right):
        self.axis = axis
        self.left = left
        self.right = right
        super().__init__(f"shape mismatch on axis '{axis}': {left!r} != {right!r}")


class GeometryError(XsrcError, ValueError):
    """A depth or coordinate falls outside the usable interior of a grid."""


class CFLError(XsrcError, ValueError):
    """Time step violates the stability bound of the scheme."""


class InstabilityError(XsrcError, FloatingPointError):
    """Wavefield blew up during time stepping."""


class SolverBreakdown(XsrcError, ArithmeticError):
    """Krylov iteration met a non-positive curvature or a non-symmetric preconditioner."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                               for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class ConfigError(XsrcError, ValueError):
    """Invalid run configuration."""
