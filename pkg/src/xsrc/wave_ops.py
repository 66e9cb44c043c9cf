"""Gather-to-gather linear operators with paired exact adjoints.

Every modeling operator here is a block of the surface-source map
``(h, f) at z_src -> (p, v_z) at z_rec``; the adjoint of each block is the
hand-transposed time loop in :mod:`xsrc.fdtd`, so dot tests close to
rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import fdtd
from .errors import GeometryError, ShapeMismatchError
from .fdtd import ANTICAUSAL, CAUSAL, FdScheme, Propagator, Record
from .grid import Gather, Medium, SourceVector, TimeAxis, check_interior, gather_dot


@dataclass(frozen=True, eq=False)
class GatherSpace:
    """Shape descriptor of a gather: depth, trace positions and time axis."""

    depth_z: float
    x_coords: np.ndarray
    time: TimeAxis

    def __post_init__(self):
        object.__setattr__(self, "x_coords", np.atleast_1d(np.asarray(self.x_coords, dtype=float)))
        object.__setattr__(self, "depth_z", float(self.depth_z))

    @classmethod
    def of(cls, g: Gather) -> "GatherSpace":
        return cls(g.depth_z, g.x_coords, g.time)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x_coords.size, self.time.nt)

    def zeros(self) -> Gather:
        return Gather(self.depth_z, self.x_coords, self.time)

    def gather(self, values) -> Gather:
        return Gather(self.depth_z, self.x_coords, self.time, values)

    def random(self, rng: np.random.Generator) -> Gather:
        return self.gather(rng.standard_normal(self.shape))

    def at_depth(self, depth_z: float) -> "GatherSpace":
        return GatherSpace(depth_z, self.x_coords, self.time)

    def check(self, g: Gather, what: str = "gather") -> None:
        self.zeros().check_compatible(g)
        if abs(g.depth_z - self.depth_z) > 1e-6:
            raise ShapeMismatchError("depth_z", self.depth_z, g.depth_z)

    def __repr__(self):
        return (f"GatherSpace(z={self.depth_z:g}, ntr={self.x_coords.size}, nt={self.time.nt}, "
                f"t0={self.time.t0:g})")


class LinearOp:
    """A linear map between gather spaces together with its transpose.

    ``forward`` and ``adjoint`` are plain callables ``Gather -> Gather``;
    inputs are shape-checked against ``domain``/``range`` before the call.
    """

    def __init__(self, domain: GatherSpace, range_: GatherSpace,
                 forward: Callable[[Gather], Gather], adjoint: Callable[[Gather], Gather],
                 label: str = "op"):
        self.domain = domain
        self.range = range_
        self._fwd = forward
        self._adj = adjoint
        self.label = label

    @property
    def domain_shape(self) -> tuple[int, int]:
        return self.domain.shape

    @property
    def range_shape(self) -> tuple[int, int]:
        return self.range.shape

    def apply(self, x: Gather) -> Gather:
        self.domain.check(x)
        return self.range.gather(self._fwd(x).values)

    def adjoint_apply(self, y: Gather) -> Gather:
        self.range.check(y)
        return self.domain.gather(self._adj(y).values)

    __call__ = apply

    @property
    def T(self) -> "LinearOp":
        return LinearOp(self.range, self.domain, self._adj, self._fwd, f"{self.label}^T")

    def __matmul__(self, other: "LinearOp") -> "LinearOp":
        """Composition ``self @ other`` (apply ``other`` first)."""
        if other.range.shape != self.domain.shape:
            raise ShapeMismatchError("compose", other.range.shape, self.domain.shape)
        a, b = self, other
        return LinearOp(b.domain, a.range,
                        lambda x: a.apply(b.apply(x).at_depth(a.domain.depth_z)),
                        lambda y: b.adjoint_apply(a.adjoint_apply(y).at_depth(b.range.depth_z)),
                        f"{a.label}*{b.label}")

    def __add__(self, other: "LinearOp") -> "LinearOp":
        _same_spaces(self, other)
        a, b = self, other
        return LinearOp(a.domain, a.range, lambda x: a.apply(x) + b.apply(x),
                        lambda y: a.adjoint_apply(y) + b.adjoint_apply(y), f"({a.label}+{b.label})")

    def __sub__(self, other: "LinearOp") -> "LinearOp":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "LinearOp":
        c = float(c)
        a = self
        return LinearOp(a.domain, a.range, lambda x: a.apply(x) * c, lambda y: a.adjoint_apply(y) * c,
                        f"{c:g}*{a.label}")

    __rmul__ = __mul__

    def __neg__(self) -> "LinearOp":
        return self * -1.0

    def __repr__(self):
        return f"LinearOp({self.label}: {self.domain} -> {self.range})"


def _same_spaces(a: LinearOp, b: LinearOp):
    if a.domain.shape != b.domain.shape:
        raise ShapeMismatchError("domain", a.domain.shape, b.domain.shape)
    if a.range.shape != b.range.shape:
        raise ShapeMismatchError("range", a.range.shape, b.range.shape)


def identity(space: GatherSpace, label: str = "I") -> LinearOp:
    return LinearOp(space, space, lambda x: x, lambda y: y, label)


class DiagonalOp(LinearOp):
    """Pointwise multiplication by a fixed array (self-adjoint)."""

    def __init__(self, space: GatherSpace, weights: np.ndarray, label: str = "diag"):
        w = np.broadcast_to(np.asarray(weights, dtype=float), space.shape).copy()
        w.setflags(write=False)
        self.weights = w
        super().__init__(space, space, self._mul, self._mul, label)

    def _mul(self, g: Gather) -> Gather:
        return g.with_values(g.values * self.weights)


class DistancePenalty(DiagonalOp):
    """Multiplication by the in-line distance ``|x - x_src|`` on a source gather."""

    def __init__(self, x_src: float, space: GatherSpace):
        self.x_src = float(x_src)
        self.distance = np.abs(space.x_coords - self.x_src)
        super().__init__(space, self.distance[:, None], label=f"A(x_src={self.x_src:g})")

    def apply_AtA(self, g: Gather) -> Gather:
        self.domain.check(g)
        return g.with_values(g.values * (self.distance ** 2)[:, None])

    def inv_sqrt_weights(self, alpha: float) -> np.ndarray:
        return 1.0 / np.sqrt(1.0 + (alpha * self.distance) ** 2)

    def apply_inv_sqrt(self, g: Gather, alpha: float) -> Gather:
        """``(I + alpha^2 A^T A)^(-1/2) g``."""
        self.domain.check(g)
        return g.with_values(g.values * self.inv_sqrt_weights(alpha)[:, None])

    def inv_sqrt_op(self, alpha: float) -> DiagonalOp:
        return DiagonalOp(self.domain, self.inv_sqrt_weights(alpha)[:, None],
                          label=f"(I+{alpha:g}^2 AtA)^-1/2")


def make_A(x_src: float, space: GatherSpace) -> DistancePenalty:
    return DistancePenalty(x_src, space)


# -- modeling operators -------------------------------------------------------

_SRC = ("h", "f")
_REC = ("p", "vz")


@dataclass(frozen=True, eq=False)
class OpConfig:
    """Everything a surface-to-surface modeling block needs."""

    medium: Medium
    scheme: FdScheme
    z_src: float
    z_rec: float
    x_coords: np.ndarray
    time: TimeAxis
    direction: str = CAUSAL
    rec_x: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x_coords", np.atleast_1d(np.asarray(self.x_coords, dtype=float)))
        rec_x = self.x_coords if self.rec_x is None else self.rec_x
        object.__setattr__(self, "rec_x", np.atleast_1d(np.asarray(rec_x, dtype=float)))
        if self.direction not in (CAUSAL, ANTICAUSAL):
            raise ValueError(f"direction must be '{CAUSAL}' or '{ANTICAUSAL}'")
        if abs(self.z_src - self.z_rec) < 1e-9:
            raise GeometryError("source and receiver depths must differ")
        g = self.medium.grid
        check_interior(g, self.z_src, self.x_coords, what="source line")
        check_interior(g, self.z_rec, self.rec_x, what="receiver line")

    @property
    def src_space(self) -> GatherSpace:
        return GatherSpace(self.z_src, self.x_coords, self.time)

    @property
    def rec_space(self) -> GatherSpace:
        return GatherSpace(self.z_rec, self.rec_x, self.time)

    def propagator(self) -> Propagator:
        return Propagator(self.medium, self.scheme, self.time)

    def swapped(self) -> "OpConfig":
        """Source and receiver roles exchanged on the time-reversed axis."""
        return OpConfig(self.medium, self.scheme, self.z_rec, self.z_src, self.rec_x,
                        self.time.reversed(), self.direction, self.x_coords)

    def with_direction(self, direction: str) -> "OpConfig":
        return OpConfig(self.medium, self.scheme, self.z_src, self.z_rec, self.x_coords,
                        self.time, direction, self.rec_x)


def make_block(cfg: OpConfig, src: str, rec: str) -> LinearOp:
    """One block of the surface-source map: ``src`` in {h, f} to ``rec`` in {p, vz}."""
    if src not in _SRC or rec not in _REC:
        raise ValueError(f"block must map one of {_SRC} to one of {_REC}")
    prop = cfg.propagator()
    dom, rng = cfg.src_space, cfg.rec_space

    def fwd(g: Gather) -> Gather:
        zero = g.zeros_like()
        sv = SourceVector(g, zero) if src == "h" else SourceVector(zero, g)
        out = prop.forward(sv, [cfg.z_rec], cfg.rec_x, cfg.direction, components=(rec,),
                           use_h=src == "h", use_f=src == "f")
        return getattr(out[cfg.z_rec], rec)

    def adj(r: Gather) -> Gather:
        zero = r.zeros_like()
        rec_pair = Record(r, zero) if rec == "p" else Record(zero, r)
        sv = prop.adjoint({cfg.z_rec: rec_pair}, cfg.z_src, cfg.x_coords, cfg.direction,
                          want_h=src == "h", want_f=src == "f")
        return sv.h if src == "h" else sv.f

    tag = "+" if cfg.direction == CAUSAL else "-"
    return LinearOp(dom, rng, fwd, adj, f"S{tag}[{src}->{rec}]({cfg.z_src:g}->{cfg.z_rec:g})")


def make_S(cfg: OpConfig) -> LinearOp:
    """Pressure source to pressure trace."""
    op = make_block(cfg, "h", "p")
    op.label = op.label.replace("[h->p]", "")
    return op


def make_V(cfg: OpConfig) -> LinearOp:
    """Vertical load to vertical-velocity trace."""
    op = make_block(cfg, "f", "vz")
    op.label = "V" + op.label[1:].replace("[f->vz]", "")
    return op


def make_S_offdiag(cfg: OpConfig, from_: str, to: str) -> LinearOp:
    """Off-diagonal block: ``h -> vz`` or ``f -> p``."""
    if (from_, to) not in (("h", "vz"), ("f", "p")):
        raise ValueError("off-diagonal blocks are (h -> vz) and (f -> p)")
    return make_block(cfg, from_, to)


def apply_full(cfg: OpConfig, sv: SourceVector) -> Record:
    """Both trace components at ``z_rec`` from the source pair ``sv``."""
    return cfg.propagator().forward(sv, [cfg.z_rec], cfg.rec_x, cfg.direction)[cfg.z_rec]


def time_reverse(g: Gather) -> Gather:
    """``(R g)(x, t) = g(x, -t)`` on the mirrored time axis."""
    return Gather(g.depth_z, g.x_coords, g.time.reversed(), g.values[:, ::-1])


def make_R(space: GatherSpace) -> LinearOp:
    rev = GatherSpace(space.depth_z, space.x_coords, space.time.reversed())
    return LinearOp(space, rev, time_reverse, time_reverse, "R")


# -- energy and dot test ------------------------------------------------------


def _trapezoid(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def energy(state: fdtd.AcousticState, medium: Medium) -> float:
    """``1/2 int (p^2/kappa + rho |v|^2) dx dz`` over the physical grid.

    Trapezoid weights on the pressure nodes; velocities are averaged from
    their faces onto the nodes first.
    """
    g = medium.grid
    sl = state.layout.physical_slice()
    p = state.p[sl]
    i0, j0 = sl[0].start, sl[1].start
    vx = state.vx[i0:i0 + g.nz, j0 - 1:j0 + g.nx]
    vx = 0.5 * (vx[:, 1:] + vx[:, :-1])
    vz = state.vz[i0 - 1:i0 + g.nz, j0:j0 + g.nx]
    vz = 0.5 * (vz[1:, :] + vz[:-1, :])
    dens = p ** 2 / medium.kappa + medium.rho * (vx ** 2 + vz ** 2)
    w = np.outer(_trapezoid(g.nz), _trapezoid(g.nx))
    return 0.5 * float(np.sum(w * dens)) * g.dx * g.dz


def dot_test(op: LinearOp, trials: int = 10, seed: int = 0) -> float:
    """Max over trials of ``|<Ax,y> - <x,A^T y>| / (|Ax| |y|)`` for random ``x``, ``y``."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = op.domain.random(rng)
        y = op.range.random(rng)
        ax = op.apply(x)
        aty = op.adjoint_apply(y)
        lhs = gather_dot(ax, y)
        rhs = gather_dot(x, aty)
        scale = ax.norm() * y.norm()
        if scale == 0.0:
            err = 0.0 if lhs == rhs == 0.0 else math.inf
        else:
            err = abs(lhs - rhs) / scale
        worst = max(worst, err)
    return worst
