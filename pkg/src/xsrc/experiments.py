"""Assembly of the standard operator set and checks for a scenario; shared by CLI, scripts and tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dtn import SlabConfig, lambda_symbol_apply, lambda_tilde, plane_wave_probe, wd, wm, wm_inv
from .fdtd import Propagator
from .grid import Gather, Grid2D, Medium, SourceVector, TimeAxis, gather_dot
from .scenarios import Scenario, bandpass, bandpass_wavelet, build_homogeneous, in_band_error
from .solver import InversionProblem
from .wave_ops import OpConfig, make_A, make_S, make_V


def background(sc: Scenario) -> Medium:
    """Homogeneous medium on the scenario grid with the deepest-corner coefficients."""
    m = sc.medium
    return build_homogeneous(m.grid, float(m.kappa[-1, -1]), float(m.rho[-1, -1]))


def slab_offset(sc: Scenario, thickness: float = 100.0) -> float:
    """Signed datum offset pointing from the source surface toward the receivers."""
    return math.copysign(abs(thickness), sc.z_r - sc.z_s)


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Modeling, time-reversal and weighting operators of one inversion setup."""

    cfg: OpConfig
    S: object
    V: object
    A: object
    W_d: object
    Wm_inv: object
    W_m: object

    def problem(self, d: Gather, alpha: float, weighted: bool = True) -> InversionProblem:
        if weighted:
            return InversionProblem(self.S, self.A, d, alpha, self.W_d, self.W_m, self.Wm_inv)
        return InversionProblem(self.S, self.A, d, alpha)


def build_operators(sc: Scenario, medium: Medium | None = None, time: TimeAxis | None = None,
                    thickness: float = 100.0, datum_margin: float = 1000.0) -> OperatorSet:
    """S and V from ``z_s`` to ``z_r`` plus the slab weights, all in ``medium``.

    ``W_d`` sits on the receiver line, ``Wm_inv`` on the source line (both with
    a ``thickness`` slab on the side the waves travel toward), ``W_m`` spans
    the full source-to-receiver interval.
    """
    medium = medium or sc.medium
    time = time or sc.time
    x = sc.x_coords
    cfg = OpConfig(medium, sc.scheme, sc.z_s, sc.z_r, x, time, rec_x=sc.rec_x)
    dz = slab_offset(sc, thickness)
    w_d = wd(SlabConfig(sc.z_r, dz, sc.rec_x, time, medium, sc.scheme, datum_margin=datum_margin))
    w_mi = wm_inv(SlabConfig(sc.z_s, dz, x, time, medium, sc.scheme, datum_margin=datum_margin))
    w_m = wm(SlabConfig(sc.z_s, sc.z_r - sc.z_s, x, time, medium, sc.scheme, crop=False,
                        datum_margin=0.0))
    return OperatorSet(cfg, make_S(cfg), make_V(cfg), make_A(sc.x_penalty_center, cfg.src_space),
                       w_d, w_mi, w_m)


def source_lambda(sc: Scenario, medium: Medium | None = None, thickness: float = 100.0,
                  surface: str = "source", datum_margin: float = 1000.0, crop: bool = True):
    z = sc.z_s if surface == "source" else sc.z_r
    x = sc.x_coords if surface == "source" else sc.rec_x
    cfg = SlabConfig(z, slab_offset(sc, thickness), x, sc.time, medium or sc.medium, sc.scheme,
                     crop=crop, datum_margin=datum_margin)
    return lambda_tilde(cfg)


def asymmetry(L, phi: Gather) -> tuple[float, float, Gather, Gather]:
    """``(L2 ratio, max ratio, L phi, L^T phi)`` for ``||L phi - L^T phi||`` against ``||L phi||``."""
    a = L.apply(phi)
    b = L.adjoint_apply(phi)
    diff = (a - b).values
    return (float(np.linalg.norm(diff) / np.linalg.norm(a.values)),
            float(np.abs(diff).max() / np.abs(a.values).max()), a, b)


# -- energy identity -------------------------------------------------------------


def padded_background(sc: Scenario, pad: float) -> Medium:
    """Homogeneous medium extended by ``pad`` meters on every side, same coordinates inside."""
    g = sc.medium.grid
    n = int(round(pad / g.dx)), int(round(pad / g.dz))
    big = Grid2D(g.nx + 2 * n[0], g.nz + 2 * n[1], g.dx, g.dz, g.x0 - n[0] * g.dx, g.z0 - n[1] * g.dz)
    bg = background(sc)
    return Medium.homogeneous(big, float(bg.kappa[0, 0]), float(bg.rho[0, 0]))


def energy_identity(sc: Scenario, p_s: Gather, h_s: Gather, pad: float = 4000.0,
                    t_stop: float | None = None, L=None) -> dict:
    """Energy left in the grid by the surface source ``h_s`` against ``<p_s, Lt p_s>``.

    The source runs in a homogeneous medium padded so the radiated field stays
    clear of the absorbing layer until ``t_stop``; the plateau is the mean of
    the conserved discrete energy over the last fifth of the run.
    """
    L = L or source_lambda(sc, background(sc))
    quad = gather_dot(p_s, L.apply(p_s))
    T = sc.time
    if t_stop is None:
        c = math.sqrt(float(background(sc).kappa[0, 0]) / float(background(sc).rho[0, 0]))
        t_stop = min(T.t_end, 0.8 * pad / c + 0.5)
    nt = min(T.nt, T.index_of(t_stop) + 1)
    T2 = TimeAxis(nt, T.dt, T.t0)
    h = Gather(h_s.depth_z, h_s.x_coords, T2, h_s.values[:, :nt])
    trace: list = []
    Propagator(padded_background(sc, pad), sc.scheme, T2).forward(
        SourceVector.pressure_only(h), [h.depth_z], h.x_coords, energy_trace=trace)
    e = np.asarray(trace)
    tail = e[-max(1, nt // 5):]
    plateau = float(tail.mean())
    return {"quadratic_form": quad, "plateau": plateau, "ratio": plateau / quad,
            "plateau_spread": float((tail.max() - tail.min()) / plateau), "energy": e, "time": T2}


# -- symbol check ---------------------------------------------------------------


def symbol_check(sc: Scenario, ratios=(0.0, 0.25, 0.5), thickness: float = 100.0,
                 convention: str = "physical", band=None) -> list[dict]:
    """Thin-slab Lt on plane-wave probes against the closed-form homogeneous multiplier.

    For each ``s = kappa xi^2 / (rho omega^2)`` a tapered plane wave crosses
    the source surface; the measured amplitude is the least-squares gain of
    the output onto the probe over the central traces (optionally after
    restricting both to ``band = (lo, hi)`` Hz). The prediction is the
    multiplier of ``convention``.
    """
    medium = background(sc)
    kappa, rho = float(medium.kappa[0, 0]), float(medium.rho[0, 0])
    c = math.sqrt(kappa / rho)
    L = source_lambda(sc, medium, thickness)
    x = sc.x_coords
    w = bandpass_wavelet(*sc.corners, sc.time.dt, sc.time.nt, sc.time.t0)
    mid = slice(x.size // 4, x.size - x.size // 4)

    rows = []
    for s in ratios:
        phi = Gather(sc.z_s, x, sc.time,
                     plane_wave_probe(x, sc.time, math.sqrt(s) / c, w, float(x[x.size // 2])))
        out = L.apply(phi)
        a, b = out.values[mid], phi.values[mid]
        if band is not None:
            lo, hi = band
            corners = (0.5 * lo, lo, hi, hi + 0.5 * lo)
            a, b = bandpass(a, sc.time.dt, corners), bandpass(b, sc.time.dt, corners)
        gain = float(np.vdot(a, b) / np.vdot(b, b))
        if convention == "spec":
            pred = 2.0 * math.sqrt(kappa * rho) / math.sqrt(1.0 - s)
        else:
            pred = 2.0 / math.sqrt(kappa * rho) * math.sqrt(1.0 - s)
        rows.append({"s": s, "measured": gain, "predicted": pred, "rel_error": abs(gain / pred - 1.0)})
    return rows


def fft_oracle_error(sc: Scenario, phi: Gather, L=None, edge: int = 10) -> float:
    """In-band distance between thin-slab Lt and the FFT multiplier on a homogeneous medium."""
    medium = background(sc)
    L = L or source_lambda(sc, medium)
    ref = lambda_symbol_apply(phi, float(medium.kappa[0, 0]), float(medium.rho[0, 0]),
                              convention="physical")
    return in_band_error(L.apply(phi), ref, edge=edge)


# -- numerical hygiene ----------------------------------------------------------


def pml_reflection_db(scheme=None, pad: float = 4000.0, dz: float = 20.0) -> float:
    """Peak boundary reflection of a vertically travelling plane wave, in dB.

    A line source at 1000 m in a 2000 m deep model is recorded 400 m above
    and below; the same run in a model extended by ``pad`` on top and bottom
    (identical x extent, so side effects cancel) is the reflection-free reference.
    """
    from .fdtd import FdScheme

    scheme = scheme or FdScheme()
    T = TimeAxis(451, 0.004, -0.4)
    w = bandpass_wavelet(1.0, 2.5, 7.5, 12.5, T.dt, T.nt, T.t0)
    nx, nz = 201, int(round(2000.0 / dz)) + 1
    n = int(round(pad / dz))
    traces = []
    for grid in (Grid2D(nx, nz, 20.0, dz), Grid2D(nx, nz + 2 * n, 20.0, dz, 0.0, -n * dz)):
        src = Gather(1000.0, grid.x, T, np.tile(w, (nx, 1)))
        rec = Propagator(Medium.homogeneous(grid, 4e9, 1000.0), scheme, T).forward(
            SourceVector.pressure_only(src), [600.0, 1400.0], [2000.0])
        traces.append(np.concatenate([rec[600.0].p.values[0], rec[1400.0].p.values[0]]))
    test, ref = traces
    return float(20.0 * np.log10(np.abs(test - ref).max() / np.abs(ref).max()))


def plane_wave_error(dz: float, t_end: float = 0.5, courant: float = 0.25) -> float:
    """L2 error of a Gaussian plane pulse after ``t_end`` against exact translation.

    ``dt = courant * dz / c`` so space and time refine together; the
    staggered initial velocity is set from the exact solution.
    """
    from .fdtd import FdScheme, new_state, step

    c, rho = 2000.0, 1000.0
    nz, nx = int(round(4000.0 / dz)) + 1, int(round(2400.0 / dz)) + 1
    g = Grid2D(nx, nz, dz, dz)
    m = Medium.homogeneous(g, c * c * rho, rho)
    sch = FdScheme(pml_width=0.0)
    dt = courant * dz / c
    nsteps = int(round(t_end / dt))
    pulse = lambda z: np.exp(-((z - 1200.0) / 150.0) ** 2)
    s = new_state(m, sch, dt)
    sl = s.layout.physical_slice()
    zz = g.z[:, None] * np.ones((1, nx))
    s.p[sl] = pulse(zz)
    i0, j0 = sl[0].start, sl[1].start
    s.vz[i0:i0 + nz, j0:j0 + nx] = pulse(zz + 0.5 * dz + 0.5 * c * dt) / (rho * c)
    for _ in range(nsteps):
        s = step(s, m, sch, dt)
    col = s.physical("p")[:, nx // 2]
    return float(np.sqrt(np.sum((col - pulse(g.z - c * nsteps * dt)) ** 2) * dz))


def convergence_orders(spacings=(40.0, 20.0, 10.0)) -> tuple[list[float], list[float]]:
    """Errors of :func:`plane_wave_error` and the observed orders between successive spacings."""
    errs = [plane_wave_error(h) for h in spacings]
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(spacings[i] / spacings[i + 1])
              for i in range(len(errs) - 1)]
    return errs, orders
