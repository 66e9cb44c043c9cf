"""Staggered-grid 2-2k acoustic finite differences with split-field PML.

The scheme discretizes

    (1/kappa) dp/dt = -div v + h delta(z - z_s)
    rho dv/dt       = -grad p + f e_z delta(z - z_s)

with pressure at integer and velocity at half-integer time levels. Every
forward time loop has a hand-transposed twin, so the adjoint of a
propagation is exact to rounding.

Time alignment within step ``n`` (``p^n``, ``v^{n-1/2}`` -> ``p^{n+1}``, ``v^{n+1/2}``):
the load ``f_n`` enters the velocity update (centred on ``t_n``), the defect
enters the pressure update as ``(h_n + h_{n+1})/2`` (centred on ``t_{n+1/2}``),
``p`` is recorded at ``t_n`` and ``v_z`` as the mean of its two neighbouring
half levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numba
import numpy as np

from . import _kernels
from .errors import CFLError, GeometryError, InstabilityError
from .grid import Gather, Medium, SourceVector, TimeAxis, check_interior

CAUSAL = "causal"
ANTICAUSAL = "anticausal"
_DIRECTIONS = (CAUSAL, ANTICAUSAL)


@lru_cache(maxsize=None)
def _staggered_coefficients_exact(k: int) -> tuple[Fraction, ...]:
    # sum_m a_m (2m-1)^(2l-1) = delta_{l,1}, l = 1..k, solved in exact arithmetic
    n = k
    mat = [[Fraction(2 * m - 1) ** (2 * l - 1) for m in range(1, n + 1)] for l in range(1, n + 1)]
    rhs = [Fraction(1 if l == 1 else 0) for l in range(1, n + 1)]
    for col in range(n):
        piv = next(r for r in range(col, n) if mat[r][col] != 0)
        mat[col], mat[piv] = mat[piv], mat[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        for r in range(n):
            if r != col and mat[r][col] != 0:
                f = mat[r][col] / mat[col][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[col])]
                rhs[r] -= f * rhs[col]
    return tuple(rhs[i] / mat[i][i] for i in range(n))


def staggered_coefficients(k: int) -> np.ndarray:
    """Taylor coefficients ``a_1..a_k`` of the order-2k staggered first derivative."""
    if not 1 <= k <= 7:
        raise ValueError(f"half order k must be in 1..7, got {k}")
    return np.array([float(c) for c in _staggered_coefficients_exact(k)])


@dataclass(frozen=True)
class FdScheme:
    """Discretization parameters.

    ``pml_width`` is in meters; ``None`` means ten grid cells and ``0`` turns the
    absorbing layer off (zero pressure outside the grid, i.e. reflecting walls).
    """

    half_order: int = 4
    cfl_safety: float = 0.9
    pml_width: float | None = None
    pml_r0: float = 1e-4
    threads: int = 1

    def __post_init__(self):
        if not 1 <= self.half_order <= 7:
            raise ValueError("half_order must be in 1..7")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must be in (0, 1]")
        if self.pml_width is not None and self.pml_width < 0:
            raise ValueError("pml_width must be non-negative")
        if not 0 < self.pml_r0 < 1:
            raise ValueError("pml_r0 must be in (0, 1)")

    @property
    def coefficients(self) -> np.ndarray:
        return staggered_coefficients(self.half_order)

    def pml_cells(self, dx: float) -> int:
        if self.pml_width is None:
            return 10
        return int(round(self.pml_width / dx))


def stable_dt(medium: Medium, scheme: FdScheme) -> float:
    """Largest stable step ``safety * h / (c_max * sqrt(2) * sum|a_j|)``, h = min(dx, dz)."""
    h = min(medium.grid.dx, medium.grid.dz)
    s = float(np.sum(np.abs(scheme.coefficients)))
    return scheme.cfl_safety * h / (medium.c_max * math.sqrt(2.0) * s)


@dataclass(frozen=True)
class Layout:
    """Mapping between physical grid nodes and padded array indices."""

    grid: "object"
    npml: int
    halo: int

    @property
    def offset(self) -> int:
        return self.npml + self.halo

    @property
    def shape(self) -> tuple[int, int]:
        o = 2 * self.offset
        return (self.grid.nz + o, self.grid.nx + o)

    def interior_slice(self):
        """Everything except the zero halo (physical grid plus PML)."""
        h = self.halo
        return (slice(h, self.shape[0] - h), slice(h, self.shape[1] - h))

    def physical_slice(self):
        o = self.offset
        return (slice(o, o + self.grid.nz), slice(o, o + self.grid.nx))


def _pad_edge(a: np.ndarray, npml: int, halo: int) -> np.ndarray:
    out = np.pad(a, npml, mode="edge")
    return np.pad(out, halo, mode="constant")


def _pml_profile(n: int, npml: int, halo: int, d: float, dt: float, d0: float, half: bool):
    """Split-field PML factors ``(e, c)`` along one axis of length ``n`` nodes."""
    size = n + 2 * (npml + halo)
    pos = np.arange(size) - (npml + halo) + (0.5 if half else 0.0)
    dist = np.maximum(0.0, np.maximum(-pos, pos - (n - 1))) * d
    if npml > 0:
        damp = d0 * (dist / (npml * d)) ** 2
    else:
        damp = np.zeros(size)
    e = (1.0 - 0.5 * dt * damp) / (1.0 + 0.5 * dt * damp)
    c = 1.0 / (1.0 + 0.5 * dt * damp)
    return e, c


class FdModel:
    """Padded coefficient arrays and kernels for one (medium, scheme, dt)."""

    def __init__(self, medium: Medium, scheme: FdScheme, dt: float):
        if dt <= 0:
            raise ValueError("model dt must be positive")
        limit = stable_dt(medium, FdScheme(scheme.half_order, 1.0, scheme.pml_width, scheme.pml_r0))
        if dt > limit * (1 + 1e-12):
            raise CFLError(f"dt={dt:g} exceeds the stability limit {limit:g} s")
        g = medium.grid
        k = scheme.half_order
        npml = scheme.pml_cells(g.dx)
        self.medium = medium
        self.scheme = scheme
        self.dt = float(dt)
        self.layout = Layout(g, npml, k)
        self.kern = _kernels.get_kernels(tuple(scheme.coefficients), scheme.threads != 1)
        if scheme.threads > 1:
            numba.set_num_threads(min(scheme.threads, numba.config.NUMBA_NUM_THREADS))

        kap = _pad_edge(medium.kappa, npml, k)
        rho = np.pad(medium.rho, npml, mode="edge")
        rho_x = rho.copy()
        rho_x[:, :-1] = 0.5 * (rho[:, :-1] + rho[:, 1:])
        rho_z = rho.copy()
        rho_z[:-1, :] = 0.5 * (rho[:-1, :] + rho[1:, :])
        rho_x = np.pad(rho_x, k, mode="constant", constant_values=1.0)
        rho_z = np.pad(rho_z, k, mode="constant", constant_values=1.0)
        self.kappa = kap
        self.rho_x = rho_x
        self.rho_z = rho_z
        self.bx = dt / (rho_x * g.dx)
        self.bz = dt / (rho_z * g.dz)
        self.kx = kap * dt / g.dx
        self.kz = kap * dt / g.dz

        if npml > 0:
            d0x = 3.0 * medium.c_max * math.log(1.0 / scheme.pml_r0) / (2.0 * npml * g.dx)
            d0z = 3.0 * medium.c_max * math.log(1.0 / scheme.pml_r0) / (2.0 * npml * g.dz)
        else:
            d0x = d0z = 0.0
        self.epx, self.cpx = _pml_profile(g.nx, npml, k, g.dx, dt, d0x, half=False)
        self.evx, self.cvx = _pml_profile(g.nx, npml, k, g.dx, dt, d0x, half=True)
        self.epz, self.cpz = _pml_profile(g.nz, npml, k, g.dz, dt, d0z, half=False)
        self.evz, self.cvz = _pml_profile(g.nz, npml, k, g.dz, dt, d0z, half=True)
        self._qx = np.zeros(self.layout.shape)
        self._qz = np.zeros(self.layout.shape)

    # -- single-step building blocks (in place) --------------------------------

    def vel_fwd(self, st: "AcousticState"):
        self.kern.vel_fwd(st.p, st.vx, st.vz, self.bx, self.bz,
                          self.evx, self.cvx, self.evz, self.cvz, self.layout.halo)

    def pre_fwd(self, st: "AcousticState"):
        self.kern.pre_fwd(st.p, st.pz, st.vx, st.vz, self.kx, self.kz,
                          self.epx, self.cpx, self.epz, self.cpz, self.layout.halo)

    def pre_adj(self, ad: "AcousticState"):
        h = self.layout.halo
        self.kern.pre_adj_coef(ad.p, ad.pz, self._qx, self._qz, self.kx, self.kz,
                               self.epx, self.cpx, self.epz, self.cpz, h)
        self.kern.pre_adj_stencil(ad.vx, ad.vz, self._qx, self._qz, h)

    def vel_adj(self, ad: "AcousticState"):
        h = self.layout.halo
        self.kern.vel_adj_coef(ad.vx, ad.vz, self._qx, self._qz, self.bx, self.bz,
                               self.evx, self.cvx, self.evz, self.cvz, h)
        self.kern.vel_adj_stencil(ad.p, self._qx, self._qz, h)

    def new_state(self) -> "AcousticState":
        return AcousticState.zeros(self.layout)

    def energy(self, st: "AcousticState", conserved: bool = False) -> float:
        sl = self.layout.interior_slice()
        g = self.layout.grid
        ep = np.sum(st.p[sl] ** 2 / self.kappa[sl])
        if conserved:
            nxt = st.copy()
            self.vel_fwd(nxt)
            ev = np.sum(self.rho_x[sl] * st.vx[sl] * nxt.vx[sl]) + np.sum(self.rho_z[sl] * st.vz[sl] * nxt.vz[sl])
        else:
            ev = np.sum(self.rho_x[sl] * st.vx[sl] ** 2) + np.sum(self.rho_z[sl] * st.vz[sl] ** 2)
        return 0.5 * float(ep + ev) * g.dx * g.dz


@lru_cache(maxsize=8)
def get_model(medium: Medium, scheme: FdScheme, dt: float) -> FdModel:
    return FdModel(medium, scheme, dt)


@dataclass(eq=False)
class AcousticState:
    """Padded pressure (total and z-split part) and staggered velocities.

    Holds ``p`` at an integer time level and ``vx``, ``vz`` half a step earlier.
    """

    layout: Layout
    p: np.ndarray
    pz: np.ndarray
    vx: np.ndarray
    vz: np.ndarray

    @classmethod
    def zeros(cls, layout: Layout) -> "AcousticState":
        return cls(layout, *(np.zeros(layout.shape) for _ in range(4)))

    def copy(self) -> "AcousticState":
        return AcousticState(self.layout, self.p.copy(), self.pz.copy(), self.vx.copy(), self.vz.copy())

    def fields(self):
        return (self.p, self.pz, self.vx, self.vz)

    def physical(self, name: str) -> np.ndarray:
        return getattr(self, name)[self.layout.physical_slice()].copy()

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.fields())

    def max_abs(self) -> float:
        return max(float(np.abs(a).max()) for a in self.fields())

    def flip_velocity(self) -> "AcousticState":
        return AcousticState(self.layout, self.p.copy(), self.pz.copy(), -self.vx, -self.vz)


def state_dot(a: AcousticState, b: AcousticState, model: FdModel) -> float:
    """Energy inner product ``sum(p_a p_b / kappa + rho v_a . v_b) dx dz``."""
    sl = model.layout.interior_slice()
    g = model.layout.grid
    s = np.sum(a.p[sl] * b.p[sl] / model.kappa[sl])
    s += np.sum(model.rho_x[sl] * a.vx[sl] * b.vx[sl]) + np.sum(model.rho_z[sl] * a.vz[sl] * b.vz[sl])
    return float(s) * g.dx * g.dz


# -- interpolation ------------------------------------------------------------

_SNAP = 1e-9


def _bracket(f: float, n: int):
    """Lower index and fractional weight for position ``f`` on ``0..n-1`` (extended)."""
    i = math.floor(f)
    a = f - i
    if a < _SNAP:
        a = 0.0
    elif a > 1 - _SNAP:
        i, a = i + 1, 0.0
    return i, a


@dataclass(frozen=True, eq=False)
class Points:
    """Sparse bilinear interpolation from a padded field onto a set of traces."""

    idx: np.ndarray
    tr: np.ndarray
    w: np.ndarray
    ntr: int

    def scaled(self, factor) -> "Points":
        factor = np.broadcast_to(np.asarray(factor, dtype=float), self.w.shape) if np.ndim(factor) else factor
        return Points(self.idx, self.tr, self.w * factor, self.ntr)

    def sample(self, field: np.ndarray) -> np.ndarray:
        out = np.zeros(self.ntr)
        np.add.at(out, self.tr, self.w * field.ravel()[self.idx])
        return out

    def spread(self, values: np.ndarray, field: np.ndarray) -> None:
        np.add.at(field.ravel(), self.idx, self.w * values[self.tr])


def interpolation_points(layout: Layout, component: str, depth_z: float, x_coords) -> Points:
    """Bilinear weights for ``component`` in {'p', 'vz'} at ``(x_coords, depth_z)``."""
    g = layout.grid
    x = np.atleast_1d(np.asarray(x_coords, dtype=float))
    check_interior(g, depth_z, x, what=f"{component} sampling line")
    fz = (depth_z - g.z0) / g.dz
    if component == "vz":
        fz -= 0.5
    elif component != "p":
        raise ValueError(f"unknown component {component!r}")
    iz, az = _bracket(fz, g.nz)
    o = layout.offset
    ncol = layout.shape[1]
    idx, tr, w = [], [], []
    for t, xv in enumerate(x):
        jx, ax = _bracket((xv - g.x0) / g.dx, g.nx)
        for di, wz in ((0, 1.0 - az), (1, az)):
            if wz == 0.0:
                continue
            for dj, wx in ((0, 1.0 - ax), (1, ax)):
                if wx == 0.0:
                    continue
                i = iz + di + o
                j = jx + dj + o
                if not (layout.halo <= i < layout.shape[0] - layout.halo
                        and layout.halo <= j < ncol - layout.halo):
                    raise GeometryError(f"interpolation node ({i}, {j}) falls in the halo")
                idx.append(i * ncol + j)
                tr.append(t)
                w.append(wz * wx)
    return Points(np.array(idx, dtype=np.int64), np.array(tr, dtype=np.int64),
                  np.array(w, dtype=float), x.size)


def injection_points(model: FdModel, component: str, gather: Gather) -> Points:
    """Adjoint interpolation scaled to a line density and to the update coefficient.

    ``h`` enters the pressure update as ``kappa*dt*h/(dx*dz)`` per unit trace
    width, ``f`` the ``v_z`` update as ``dt*f/(rho*dx*dz)``.
    """
    pts = interpolation_points(model.layout, component, gather.depth_z, gather.x_coords)
    g = model.layout.grid
    base = gather.dx_trace / (g.dx * g.dz)
    if component == "p":
        coef = model.kappa.ravel()[pts.idx] * model.dt
    else:
        coef = model.dt / model.rho_z.ravel()[pts.idx]
    return Points(pts.idx, pts.tr, pts.w * coef * base, pts.ntr)


# -- single-step public API --------------------------------------------------


def new_state(medium: Medium, scheme: FdScheme, dt: float) -> AcousticState:
    return get_model(medium, scheme, abs(dt)).new_state()


def step(state: AcousticState, medium: Medium, scheme: FdScheme, dt: float) -> AcousticState:
    """One leapfrog step; negative ``dt`` marches the time-reversed system."""
    model = get_model(medium, scheme, abs(dt))
    out = state.copy() if dt > 0 else state.flip_velocity()
    model.vel_fwd(out)
    model.pre_fwd(out)
    if not out.is_finite():
        raise InstabilityError("non-finite values after one step")
    return out if dt > 0 else out.flip_velocity()


def inject(state: AcousticState, sv: SourceVector, time_index: int, dt: float,
           medium: Medium, scheme: FdScheme = FdScheme()) -> AcousticState:
    """Add sample ``time_index`` of ``sv`` to the pressure and ``v_z`` fields."""
    model = get_model(medium, scheme, abs(dt))
    check_interior(medium.grid, sv.depth_z, sv.h.x_coords, what="source")
    out = state.copy()
    ph = injection_points(model, "p", sv.h)
    pf = injection_points(model, "vz", sv.f)
    ph.spread(sv.h.values[:, time_index], out.p)
    pf.spread(sv.f.values[:, time_index], out.vz)
    return out


def sample(state: AcousticState, component: str, depth_z: float, x_coords) -> np.ndarray:
    pts = interpolation_points(state.layout, component, depth_z, x_coords)
    return pts.sample(getattr(state, component))


def energy(state: AcousticState, medium: Medium, scheme: FdScheme = FdScheme(),
           dt: float | None = None, conserved: bool = False) -> float:
    """Acoustic energy ``1/2 sum(p^2/kappa + rho |v|^2) dx dz`` of a state.

    With ``conserved=True`` (needs ``dt``) the velocity term pairs the stored
    level with the next half level, the quadratic form the leapfrog scheme
    conserves exactly in the absence of damping and sources.
    """
    if conserved and dt is None:
        raise ValueError("conserved energy needs dt")
    model = get_model(medium, scheme, abs(dt) if dt else stable_dt(medium, scheme))
    return model.energy(state, conserved=conserved)


# -- full propagation ---------------------------------------------------------


@dataclass(frozen=True)
class Record:
    """Traces recorded at one depth: pressure and vertical velocity."""

    p: Gather
    vz: Gather


class Propagator:
    """Time loops for one (medium, scheme, time axis) with sources on one line.

    ``forward`` maps source arrays to recorded traces; ``adjoint`` is its exact
    transpose with respect to the gather inner products.
    """

    CHECK_EVERY = 64
    BLOWUP = 1e10

    def __init__(self, medium: Medium, scheme: FdScheme, time: TimeAxis):
        self.medium = medium
        self.scheme = scheme
        self.time = time
        self.model = get_model(medium, scheme, time.dt)

    # sources: list of (component, Points, values[ntr, nt]) ; records: list of (component, Points)

    def _run_forward(self, sources, records, energy_trace=None):
        m = self.model
        nt = self.time.nt
        st = m.new_state()
        outs = [np.zeros((pts.ntr, nt)) for _, pts in records]
        p_src = [(pts, v) for c, pts, v in sources if c == "p"]
        v_src = [(pts, v) for c, pts, v in sources if c == "vz"]
        p_rec = [(pts, out) for (c, pts), out in zip(records, outs) if c == "p"]
        v_rec = [(pts, out) for (c, pts), out in zip(records, outs) if c == "vz"]
        pflat, vzflat = st.p.ravel(), st.vz.ravel()
        scale = max([np.abs(v).max() * np.abs(pts.w).max() for pts, v in p_src + v_src if pts.w.size]
                    + [0.0])
        limit = self.BLOWUP * max(scale, 1e-300)
        for n in range(nt):
            for pts, out in v_rec:
                _kernels.collect(vzflat, pts.idx, pts.tr, pts.w, out, n, 0.5)
            m.vel_fwd(st)
            for pts, v in v_src:
                _kernels.scatter_add(vzflat, pts.idx, pts.tr, pts.w, v, n)
            for pts, out in v_rec:
                _kernels.collect(vzflat, pts.idx, pts.tr, pts.w, out, n, 0.5)
            for pts, out in p_rec:
                _kernels.collect(pflat, pts.idx, pts.tr, pts.w, out, n, 1.0)
            if energy_trace is not None:
                energy_trace.append(m.energy(st, conserved=True))
            m.pre_fwd(st)
            for pts, v in p_src:
                _kernels.scatter_add(pflat, pts.idx, pts.tr, pts.w, v, n)
            if n % self.CHECK_EVERY == self.CHECK_EVERY - 1:
                mx = np.abs(st.p).max()
                if not np.isfinite(mx) or (scale > 0 and mx > limit):
                    raise InstabilityError(f"pressure blew up at step {n} (max |p| = {mx:g})")
        return outs

    def _run_adjoint(self, residuals, sources):
        """residuals: list of (component, Points, values); sources: list of (component, Points)."""
        m = self.model
        nt = self.time.nt
        ad = m.new_state()
        outs = [np.zeros((pts.ntr, nt)) for _, pts in sources]
        p_src = [(pts, out) for (c, pts), out in zip(sources, outs) if c == "p"]
        v_src = [(pts, out) for (c, pts), out in zip(sources, outs) if c == "vz"]
        p_res = [(pts, v) for c, pts, v in residuals if c == "p"]
        v_res = [(pts.scaled(0.5), v) for c, pts, v in residuals if c == "vz"]
        pflat, vzflat = ad.p.ravel(), ad.vz.ravel()
        for n in range(nt - 1, -1, -1):
            for pts, out in p_src:
                _kernels.collect(pflat, pts.idx, pts.tr, pts.w, out, n, 1.0)
            m.pre_adj(ad)
            for pts, v in p_res:
                _kernels.scatter_add(pflat, pts.idx, pts.tr, pts.w, v, n)
            for pts, v in v_res:
                _kernels.scatter_add(vzflat, pts.idx, pts.tr, pts.w, v, n)
            for pts, out in v_src:
                _kernels.collect(vzflat, pts.idx, pts.tr, pts.w, out, n, 1.0)
            m.vel_adj(ad)
            for pts, v in v_res:
                _kernels.scatter_add(vzflat, pts.idx, pts.tr, pts.w, v, n)
            if n % self.CHECK_EVERY == 0 and not np.isfinite(ad.p).all():
                raise InstabilityError(f"adjoint field blew up at step {n}")
        return outs

    # -- gather-level interface ---------------------------------------------

    def _src_arrays(self, sv: SourceVector, need_h: bool, need_f: bool, sign_h=1.0, flip=False):
        srcs = []
        if need_h:
            h = sv.h.values
            if flip:
                h = h[:, ::-1]
            hbar = np.empty_like(h)
            hbar[:, :-1] = 0.5 * (h[:, :-1] + h[:, 1:])
            hbar[:, -1] = 0.5 * h[:, -1]
            srcs.append(("p", injection_points(self.model, "p", sv.h), sign_h * hbar))
        if need_f:
            f = sv.f.values[:, ::-1] if flip else sv.f.values
            srcs.append(("vz", injection_points(self.model, "vz", sv.f), np.ascontiguousarray(f)))
        return srcs

    def forward(self, sv: SourceVector, record_depths, record_x, direction: str = CAUSAL,
                components=("p", "vz"), use_h: bool | None = None, use_f: bool | None = None,
                energy_trace=None) -> dict:
        """Propagate ``sv`` and record the requested components at every depth.

        Returns ``{depth: Record}``; components not requested are zero gathers.
        """
        if direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}")
        self._check_source(sv)
        use_h = bool(np.any(sv.h.values)) if use_h is None else use_h
        use_f = bool(np.any(sv.f.values)) if use_f is None else use_f
        anti = direction == ANTICAUSAL
        srcs = self._src_arrays(sv, use_h, use_f, sign_h=-1.0 if anti else 1.0, flip=anti)
        records, keys = [], []
        for z in record_depths:
            for c in components:
                records.append((c, interpolation_points(self.model.layout, c, z, record_x)))
                keys.append((z, c))
        outs = self._run_forward(srcs, records, energy_trace) if srcs else [
            np.zeros((len(np.atleast_1d(record_x)), self.time.nt)) for _ in records]
        result = {}
        for z in record_depths:
            vals = {}
            for c in ("p", "vz"):
                if (z, c) in keys:
                    v = outs[keys.index((z, c))]
                    if anti:
                        v = v[:, ::-1] * (-1.0 if c == "vz" else 1.0)
                    vals[c] = v
                else:
                    vals[c] = None
            result[z] = Record(Gather(z, record_x, self.time, vals["p"]),
                               Gather(z, record_x, self.time, vals["vz"]))
        return result

    def adjoint(self, residuals: dict, src_depth: float, src_x, direction: str = CAUSAL,
                want_h: bool = True, want_f: bool = True) -> SourceVector:
        """Transpose of :meth:`forward`: residual records at depths -> source pair."""
        if direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}")
        anti = direction == ANTICAUSAL
        template = Gather(src_depth, src_x, self.time)
        check_interior(self.medium.grid, src_depth, template.x_coords, what="source")
        w_src = template.weight
        res = []
        for z, rec in residuals.items():
            for c, g in (("p", rec.p), ("vz", rec.vz)):
                if g is None or not np.any(g.values):
                    continue
                v = g.values * (g.weight / w_src)
                if anti:
                    v = v[:, ::-1] * (-1.0 if c == "vz" else 1.0)
                res.append((c, interpolation_points(self.model.layout, c, z, g.x_coords),
                            np.ascontiguousarray(v)))
        srcs = []
        if want_h:
            srcs.append(("p", injection_points(self.model, "p", template)))
        if want_f:
            srcs.append(("vz", injection_points(self.model, "vz", template)))
        nt = self.time.nt
        outs = self._run_adjoint(res, srcs) if res else [np.zeros((template.ntr, nt)) for _ in srcs]
        h = np.zeros((template.ntr, nt))
        f = np.zeros((template.ntr, nt))
        k = 0
        if want_h:
            hbar = outs[k]
            k += 1
            h[:, :] = 0.5 * hbar
            h[:, 1:] += 0.5 * hbar[:, :-1]
            if anti:
                h = -h[:, ::-1]
        if want_f:
            f = outs[k]
            if anti:
                f = f[:, ::-1]
        return SourceVector(template.with_values(h), template.with_values(np.ascontiguousarray(f)))

    def _check_source(self, sv: SourceVector):
        if sv.h.nt != self.time.nt or abs(sv.h.time.dt - self.time.dt) > 1e-12 * self.time.dt:
            raise GeometryError("source time axis does not match the propagator")
        check_interior(self.medium.grid, sv.depth_z, sv.h.x_coords, what="source")


def propagate(source: SourceVector, record_depths, record_x, medium: Medium, scheme: FdScheme,
              time: TimeAxis, direction: str = CAUSAL) -> dict:
    """Solve the surface-source system and record ``(p, v_z)`` at every depth."""
    return Propagator(medium, scheme, time).forward(source, list(record_depths), record_x, direction)


def adjoint_propagate(residuals: dict, src_depth: float, src_x, medium: Medium, scheme: FdScheme,
                      time: TimeAxis, direction: str = CAUSAL) -> SourceVector:
    """Exact transpose of :func:`propagate` for the same configuration."""
    return Propagator(medium, scheme, time).adjoint(residuals, src_depth, src_x, direction)


def crop_medium_z(medium: Medium, z_lo: float, z_hi: float, pad_cells: int = 4) -> Medium:
    """Rows covering ``[z_lo, z_hi]`` plus ``pad_cells`` on each side."""
    g = medium.grid
    i0 = max(0, int(math.floor((z_lo - g.z0) / g.dz + 1e-9)) - pad_cells)
    i1 = min(g.nz, int(math.ceil((z_hi - g.z0) / g.dz - 1e-9)) + 1 + pad_cells)
    return medium.crop_z(i0, i1)
