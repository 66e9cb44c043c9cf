"""Grids, media, gathers and the inner-product algebra used by every operator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ShapeMismatchError


@dataclass(frozen=True)
class Grid2D:
    """Lattice of pressure nodes ``x0 + j*dx``, ``z0 + i*dz`` (z positive down)."""

    nx: int
    nz: int
    dx: float
    dz: float
    x0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.nz < 2:
            raise ValueError(f"grid needs at least 2x2 nodes, got nx={self.nx}, nz={self.nz}")
        if not (self.dx > 0 and self.dz > 0):
            raise ValueError("grid steps must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nz, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.dz * np.arange(self.nz)

    @property
    def x_max(self) -> float:
        return self.x0 + (self.nx - 1) * self.dx

    @property
    def z_max(self) -> float:
        return self.z0 + (self.nz - 1) * self.dz

    def contains(self, x: float | np.ndarray, z: float) -> bool:
        x = np.asarray(x, dtype=float)
        eps = 1e-9 * max(self.dx, self.dz)
        return bool(np.all((x >= self.x0 - eps) & (x <= self.x_max + eps))
                    and self.z0 - eps <= z <= self.z_max + eps)

    def crop_z(self, i0: int, i1: int) -> "Grid2D":
        """Rows ``i0 .. i1-1`` as a new grid with the same absolute coordinates."""
        return Grid2D(self.nx, i1 - i0, self.dx, self.dz, self.x0, self.z0 + i0 * self.dz)

    def crop_x(self, j0: int, j1: int) -> "Grid2D":
        return Grid2D(j1 - j0, self.nz, self.dx, self.dz, self.x0 + j0 * self.dx, self.z0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Medium:
    """Bulk modulus and density sampled on the pressure nodes of ``grid``."""

    grid: Grid2D
    kappa: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        kappa = _readonly(np.broadcast_to(self.kappa, self.grid.shape))
        rho = _readonly(np.broadcast_to(self.rho, self.grid.shape))
        if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(rho))):
            raise ValueError("medium fields must be finite")
        if np.any(kappa <= 0) or np.any(rho <= 0):
            raise ValueError("kappa and rho must be positive everywhere")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def homogeneous(cls, grid: Grid2D, kappa: float, rho: float) -> "Medium":
        return cls(grid, np.full(grid.shape, float(kappa)), np.full(grid.shape, float(rho)))

    @property
    def velocity(self) -> np.ndarray:
        return np.sqrt(self.kappa / self.rho)

    @property
    def c_max(self) -> float:
        return float(self.velocity.max())

    def crop_z(self, i0: int, i1: int) -> "Medium":
        return Medium(self.grid.crop_z(i0, i1), self.kappa[i0:i1], self.rho[i0:i1])

    def crop_x(self, j0: int, j1: int) -> "Medium":
        return Medium(self.grid.crop_x(j0, j1), self.kappa[:, j0:j1], self.rho[:, j0:j1])


@dataclass(frozen=True)
class TimeAxis:
    nt: int
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        if self.nt < 1:
            raise ValueError("time axis needs at least one sample")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def t_end(self) -> float:
        return self.t0 + (self.nt - 1) * self.dt

    def reversed(self) -> "TimeAxis":
        return TimeAxis(self.nt, self.dt, -self.t_end)

    def index_of(self, t: float) -> int:
        return int(round((t - self.t0) / self.dt))


def _close(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= 1e-9 * max(scale, abs(a), abs(b), 1e-300)


@dataclass(frozen=True, eq=False)
class Gather:
    """Samples of one field component on the line ``z = depth_z``.

    ``values`` has shape ``(ntr, nt)``; trace ``i`` sits at ``x_coords[i]``.
    Instances are immutable; arithmetic returns new gathers.
    """

    depth_z: float
    x_coords: np.ndarray
    time: TimeAxis
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        x = _readonly(np.atleast_1d(self.x_coords))
        if x.ndim != 1:
            raise ValueError("x_coords must be one-dimensional")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("x_coords must be strictly increasing")
        vals = self.values
        if vals is None:
            vals = np.zeros((x.size, self.time.nt))
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != (x.size, self.time.nt):
            raise ValueError(f"values shape {vals.shape} does not match "
                             f"(ntr, nt) = ({x.size}, {self.time.nt})")
        object.__setattr__(self, "x_coords", x)
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "depth_z", float(self.depth_z))

    @classmethod
    def zeros(cls, depth_z: float, x_coords, time: TimeAxis) -> "Gather":
        return cls(depth_z, x_coords, time)

    @classmethod
    def regular(cls, depth_z: float, x_first: float, dx: float, ntr: int, time: TimeAxis,
                values=None) -> "Gather":
        return cls(depth_z, x_first + dx * np.arange(ntr), time, values)

    @property
    def ntr(self) -> int:
        return self.x_coords.size

    @property
    def nt(self) -> int:
        return self.time.nt

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def dx_trace(self) -> float:
        """Trace spacing used as quadrature weight; 1 for a single trace (point)."""
        if self.ntr < 2:
            return 1.0
        return float((self.x_coords[-1] - self.x_coords[0]) / (self.ntr - 1))

    @property
    def weight(self) -> float:
        return self.dx_trace * self.time.dt

    def with_values(self, values) -> "Gather":
        return Gather(self.depth_z, self.x_coords, self.time, values)

    def zeros_like(self) -> "Gather":
        return Gather(self.depth_z, self.x_coords, self.time)

    def at_depth(self, depth_z: float) -> "Gather":
        return Gather(depth_z, self.x_coords, self.time, self.values)

    def check_compatible(self, other: "Gather", check_depth: bool = False) -> None:
        if self.ntr != other.ntr:
            raise ShapeMismatchError("trace", self.ntr, other.ntr)
        if self.nt != other.nt:
            raise ShapeMismatchError("time", self.nt, other.nt)
        if not _close(self.time.dt, other.time.dt, self.time.dt):
            raise ShapeMismatchError("dt", self.time.dt, other.time.dt)
        if not _close(self.time.t0, other.time.t0, self.time.dt):
            raise ShapeMismatchError("t0", self.time.t0, other.time.t0)
        if not np.allclose(self.x_coords, other.x_coords, rtol=0, atol=1e-6 * max(1.0, self.dx_trace)):
            raise ShapeMismatchError("x_coords", self.x_coords[:3], other.x_coords[:3])
        if check_depth and not _close(self.depth_z, other.depth_z, 1.0):
            raise ShapeMismatchError("depth_z", self.depth_z, other.depth_z)

    def norm(self) -> float:
        return math.sqrt(max(gather_dot(self, self), 0.0))

    def __add__(self, other: "Gather") -> "Gather":
        return gather_axpy(1.0, other, self)

    def __sub__(self, other: "Gather") -> "Gather":
        return gather_axpy(-1.0, other, self)

    def __neg__(self) -> "Gather":
        return self.with_values(-self.values)

    def __mul__(self, alpha: float) -> "Gather":
        return self.with_values(float(alpha) * self.values)

    __rmul__ = __mul__

    def __truediv__(self, alpha: float) -> "Gather":
        return self.with_values(self.values / float(alpha))

    def __repr__(self):
        return (f"Gather(z={self.depth_z:g}, ntr={self.ntr}, x=[{self.x_coords[0]:g}.."
                f"{self.x_coords[-1]:g}], nt={self.nt}, dt={self.time.dt:g}, t0={self.time.t0:g})")


@dataclass(frozen=True, eq=False)
class SourceVector:
    """Constitutive defect ``h`` and vertical load ``f`` on one source line."""

    h: Gather
    f: Gather

    def __post_init__(self):
        self.h.check_compatible(self.f, check_depth=True)

    @classmethod
    def pressure_only(cls, h: Gather) -> "SourceVector":
        return cls(h, h.zeros_like())

    @classmethod
    def force_only(cls, f: Gather) -> "SourceVector":
        return cls(f.zeros_like(), f)

    @property
    def depth_z(self) -> float:
        return self.h.depth_z


def gather_dot(a: Gather, b: Gather) -> float:
    """Quadrature inner product ``sum(a*b) * dx * dt`` with uniform weights."""
    a.check_compatible(b)
    return float(np.vdot(a.values, b.values)) * a.weight


def gather_axpy(alpha: float, x: Gather, y: Gather) -> Gather:
    """Return ``y + alpha*x``; inputs are left untouched."""
    x.check_compatible(y)
    return y.with_values(y.values + float(alpha) * x.values)


def mute_window(t: np.ndarray, t_lo: float, t_hi: float, ramp: float) -> np.ndarray:
    """Cosine-tapered boxcar: 1 on ``[t_lo, t_hi]``, 0 beyond ``ramp`` outside it."""
    if not t_lo < t_hi:
        raise ValueError("mute window needs t_lo < t_hi")
    if ramp < 0:
        raise ValueError("ramp must be non-negative")
    t = np.asarray(t, dtype=float)
    w = ((t >= t_lo) & (t <= t_hi)).astype(float)
    if ramp > 0:
        lo = (t < t_lo) & (t > t_lo - ramp)
        w[lo] = 0.5 * (1.0 + np.cos(np.pi * (t_lo - t[lo]) / ramp))
        hi = (t > t_hi) & (t < t_hi + ramp)
        w[hi] = 0.5 * (1.0 + np.cos(np.pi * (t[hi] - t_hi) / ramp))
    return w


def resample_mute(g: Gather, t_lo: float, t_hi: float, ramp: float = 0.0) -> Gather:
    """Multiply every trace by :func:`mute_window` evaluated on the gather's time axis."""
    return g.with_values(g.values * mute_window(g.time.t, t_lo, t_hi, ramp)[None, :])


def check_interior(grid: Grid2D, z: float, x=None, what: str = "coordinate") -> None:
    if x is None:
        x = np.array([grid.x0])
    if not grid.contains(x, z):
        raise GeometryError(f"{what} at z={z:g} (x range {np.min(x):g}..{np.max(x):g}) "
                            f"lies outside the grid interior "
                            f"[{grid.x0:g},{grid.x_max:g}] x [{grid.z0:g},{grid.z_max:g}]")
