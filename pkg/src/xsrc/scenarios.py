"""Builders for the two reference models, the source wavelet and the acquisition geometry."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fdtd import CAUSAL, FdScheme, Propagator
from .grid import Gather, Grid2D, Medium, SourceVector, TimeAxis

KAPPA0 = 4.0e9
RHO0 = 1000.0
LENS_KAPPA_DROP = 2.4e9


def paper_grid() -> Grid2D:
    """8 km x 4 km at 20 m: 401 x 201 pressure nodes."""
    return Grid2D(nx=401, nz=201, dx=20.0, dz=20.0)


def build_homogeneous(grid: Grid2D | None = None, kappa: float = KAPPA0, rho: float = RHO0) -> Medium:
    return Medium.homogeneous(grid or paper_grid(), kappa, rho)


def lens_bump(r: np.ndarray, radius: float) -> np.ndarray:
    s = np.asarray(r, dtype=float) / radius
    return np.where(s <= 1.0, np.cos(0.5 * np.pi * np.minimum(s, 1.0)) ** 2, 0.0)


def build_lens(grid: Grid2D | None = None, radius: float = 600.0, center=(4000.0, 2000.0),
               kappa: float = KAPPA0, drop: float = LENS_KAPPA_DROP, rho: float = RHO0) -> Medium:
    """Homogeneous background with a smooth low-modulus disc, ``kappa(r) = kappa - drop*cos^2(pi r/2R)``."""
    grid = grid or paper_grid()
    x, z = np.meshgrid(grid.x, grid.z)
    r = np.hypot(x - center[0], z - center[1])
    return Medium(grid, kappa - drop * lens_bump(r, radius), np.full(grid.shape, rho))


def trapezoid_spectrum(freq: np.ndarray, f1: float, f2: float, f3: float, f4: float) -> np.ndarray:
    """Unit passband on ``[f2, f3]`` with cosine-squared ramps down to 0 at ``f1`` and ``f4``."""
    f = np.abs(np.asarray(freq, dtype=float))
    a = np.zeros_like(f)
    a[(f >= f2) & (f <= f3)] = 1.0
    lo = (f > f1) & (f < f2)
    a[lo] = np.sin(0.5 * np.pi * (f[lo] - f1) / (f2 - f1)) ** 2
    hi = (f > f3) & (f < f4)
    a[hi] = np.cos(0.5 * np.pi * (f[hi] - f3) / (f4 - f3)) ** 2
    return a


def _check_corners(f1, f2, f3, f4, dt):
    nyq = 0.5 / dt
    if not (0 <= f1 < f2 < f3 < f4 < nyq):
        raise ValueError(f"corner frequencies must satisfy 0 <= f1 < f2 < f3 < f4 < {nyq:g} Hz, "
                         f"got ({f1}, {f2}, {f3}, {f4})")


def bandpass_wavelet(f1: float, f2: float, f3: float, f4: float, dt: float, nt: int,
                     t0: float | None = None) -> np.ndarray:
    """Zero-phase trapezoid-spectrum wavelet sampled at ``t0 + n*dt``, peak 1 at ``t = 0``.

    ``t0`` defaults to ``-(nt//2)*dt`` so the peak sits mid-trace.
    """
    _check_corners(f1, f2, f3, f4, dt)
    if t0 is None:
        t0 = -(nt // 2) * dt
    k0 = int(round(-t0 / dt))
    if abs(k0 * dt + t0) > 1e-9 * dt:
        raise ValueError("t = 0 must fall on a sample of the time axis")
    nfft = 1 << int(np.ceil(np.log2(8 * nt)))
    spec = trapezoid_spectrum(np.fft.rfftfreq(nfft, dt), f1, f2, f3, f4)
    w = np.fft.irfft(spec, nfft)
    w /= w[0]
    idx = (np.arange(nt) - k0) % nfft
    return w[idx]


def bandpass(values: np.ndarray, dt: float, corners=(0.5, 1.0, 12.5, 15.0)) -> np.ndarray:
    """Zero-phase trapezoid filter along the last axis (zero-padded to avoid wrap)."""
    nt = values.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * nt)))
    spec = trapezoid_spectrum(np.fft.rfftfreq(nfft, dt), *corners)
    out = np.fft.irfft(np.fft.rfft(values, nfft, axis=-1) * spec, nfft, axis=-1)
    return out[..., :nt]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Model, time axis and acquisition geometry of one experiment."""

    name: str
    medium: Medium
    time: TimeAxis
    z_s: float = 3000.0
    z_r: float = 1000.0
    src_x_range: tuple = (2000.0, 6000.0)
    rec_x_range: tuple = (2000.0, 6000.0)
    trace_dx: float = 20.0
    point_src: tuple = (3500.0, 3500.0)
    corners: tuple = (1.0, 2.5, 7.5, 12.5)
    alpha: float = 1e-3
    x_penalty_center: float = 3500.0
    scheme: FdScheme = field(default_factory=FdScheme)
    amplitude: float = 1.0

    @property
    def x_coords(self) -> np.ndarray:
        lo, hi = self.src_x_range
        n = int(round((hi - lo) / self.trace_dx)) + 1
        return lo + self.trace_dx * np.arange(n)

    @property
    def rec_x(self) -> np.ndarray:
        lo, hi = self.rec_x_range
        n = int(round((hi - lo) / self.trace_dx)) + 1
        return lo + self.trace_dx * np.arange(n)

    def wavelet(self) -> np.ndarray:
        return self.amplitude * bandpass_wavelet(*self.corners, self.time.dt, self.time.nt, self.time.t0)

    def with_medium(self, medium: Medium, name: str | None = None) -> "Scenario":
        return replace(self, medium=medium, name=name or self.name)


PAPER_TIME = TimeAxis(nt=1051, dt=0.004, t0=-1.0)


def paper_scenario(name: str = "paper-homog", **overrides) -> Scenario:
    """The reference experiments: ``paper-homog`` or ``paper-lens``."""
    if name == "paper-homog":
        medium = build_homogeneous()
    elif name == "paper-lens":
        medium = build_lens(radius=overrides.pop("lens_radius", 600.0))
    else:
        raise KeyError(f"unknown scenario {name!r}; choose 'paper-homog' or 'paper-lens'")
    overrides.pop("lens_radius", None)
    return Scenario(name=name, medium=medium, time=overrides.pop("time", PAPER_TIME), **overrides)


SMALL_TIME = TimeAxis(nt=401, dt=0.004, t0=-0.4)


def small_grid() -> Grid2D:
    return Grid2D(nx=121, nz=81, dx=20.0, dz=20.0)


def small_scenario(name: str = "small-homog", **overrides) -> Scenario:
    """Same physics at roughly a third of the size, for tests and quick runs.

    Grid 2.4 km x 1.6 km; data at 400 m, sources at 1200 m, point source at
    (1100, 1400) m, traces 600..1800 m, lens of radius 200 m at (1200, 800) m.
    """
    radius = overrides.pop("lens_radius", 200.0)
    if name == "small-homog":
        medium = build_homogeneous(small_grid())
    elif name == "small-lens":
        medium = build_lens(small_grid(), radius=radius, center=(1200.0, 800.0))
    else:
        raise KeyError(f"unknown scenario {name!r}; choose 'small-homog' or 'small-lens'")
    base = dict(z_s=1200.0, z_r=400.0, src_x_range=(600.0, 1800.0), rec_x_range=(600.0, 1800.0),
                point_src=(1100.0, 1400.0), x_penalty_center=1100.0, time=SMALL_TIME)
    base.update(overrides)
    return Scenario(name=name, medium=medium, **base)


PRESETS = ("paper-homog", "paper-lens", "small-homog", "small-lens")


def get_scenario(name: str, **overrides) -> Scenario:
    """Preset by name; ``overrides`` replace Scenario fields (plus ``lens_radius``)."""
    if name.startswith("paper-"):
        return paper_scenario(name, **overrides)
    if name.startswith("small-"):
        return small_scenario(name, **overrides)
    raise KeyError(f"unknown scenario {name!r}; choose one of {', '.join(PRESETS)}")


@dataclass(frozen=True, eq=False)
class DowngoingSources:
    h_s: Gather
    f_s: Gather
    d: Gather
    p_s: Gather
    vz_s: Gather
    vz_r: Gather

    def __iter__(self):
        return iter((self.h_s, self.f_s, self.d))


def point_source_record(sc: Scenario, medium: Medium, depths, x_coords):
    """Traces at ``depths`` from the wavelet injected as a pressure source at ``point_src``."""
    xd, zd = sc.point_src
    src = Gather(zd, [xd], sc.time, sc.wavelet()[None, :])
    prop = Propagator(medium, sc.scheme, sc.time)
    return prop.forward(SourceVector.pressure_only(src), list(depths), x_coords, CAUSAL)


def make_downgoing_sources(sc: Scenario, source_medium: Medium | None = None) -> DowngoingSources:
    """Source gathers on ``z_s`` and data on ``z_r`` generated by the buried point source.

    ``h_s = -2 v_z`` and ``f_s = -2 p`` on ``z_s`` are taken from a run in
    ``source_medium`` (default: homogeneous background, which agrees with both
    presets between ``z_s`` and the point source); ``d`` is the pressure on
    ``z_r`` in the scenario medium.
    """
    xd, zd = sc.point_src
    if not (zd > sc.z_s > sc.z_r or zd < sc.z_s < sc.z_r):
        raise ValueError("point source must lie beyond z_s on the side away from z_r")
    if source_medium is None:
        g = sc.medium.grid
        source_medium = Medium.homogeneous(g, float(sc.medium.kappa[-1, -1]),
                                           float(sc.medium.rho[-1, -1]))
    xs = sc.x_coords
    if source_medium is sc.medium and np.array_equal(xs, sc.rec_x):
        recs = point_source_record(sc, sc.medium, [sc.z_s, sc.z_r], xs)
        rec_s, rec_r = recs[sc.z_s], recs[sc.z_r]
    else:
        rec_s = point_source_record(sc, source_medium, [sc.z_s], xs)[sc.z_s]
        rec_r = point_source_record(sc, sc.medium, [sc.z_r], sc.rec_x)[sc.z_r]
    return DowngoingSources(h_s=-2.0 * rec_s.vz, f_s=-2.0 * rec_s.p, d=rec_r.p,
                            p_s=rec_s.p, vz_s=rec_s.vz, vz_r=rec_r.vz)


def in_band_error(a: Gather, b: Gather, edge: int = 10, corners=(0.5, 1.0, 12.5, 15.0)) -> float:
    """``|| B(a - b) || / || B b ||`` after bandpass ``B``, dropping ``edge`` traces per side."""
    a.check_compatible(b)
    sl = slice(edge, a.ntr - edge if edge else None)
    fa = bandpass(a.values[sl], a.time.dt, corners)
    fb = bandpass(b.values[sl], b.time.dt, corners)
    return float(np.linalg.norm(fa - fb) / np.linalg.norm(fb))
