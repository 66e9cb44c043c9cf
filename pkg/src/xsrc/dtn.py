"""Pressure-to-source operators from short propagations, and their Fourier-symbol oracle.

A slab is a source surface ``z_surface`` plus an auxiliary datum
``z_surface + delta_z`` on the side the field travels toward. Propagating
across the slab and back gives

    Lt      = -8 V^T Pi0 S Pi1^T                     (pressure trace -> defect)
    Wm_inv  = -4 Pi1 S^T (Pi0^T Pi1 + Pi1^T Pi0) S Pi1^T  = (Lt + Lt^T)/2
    Wm      = WM_SCALE Pi0 S^T (Pi1^T Pi0 + Pi0^T Pi1) S Pi0^T

where ``S`` is the two-component surface-source map of the slab.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .fdtd import CAUSAL, FdScheme, Record, crop_medium_z
from .grid import Gather, Medium, SourceVector, TimeAxis, check_interior
from .wave_ops import GatherSpace, LinearOp, OpConfig, make_S_offdiag, make_V

LAMBDA_SCALE = -8.0
WM_INV_SCALE = -4.0
# Chaining the column relation with (S^T V ~ I/4) gives Lambda^-1 ~ -2 S^T Pi1 S Pi0^T,
# so the symmetrized inverse carries -1. The value -1/16 printed alongside the
# original derivation is off by 16; it is kept for comparison runs.
WM_SCALE = -1.0
WM_SCALE_PRINTED = -1.0 / 16.0


@dataclass(frozen=True, eq=False)
class SlabConfig:
    """Source surface, signed datum offset and the model used between them.

    With ``crop=True`` the propagation runs on the rows spanning the slab plus
    ``pad_cells`` on each side; the absorbing layer sits outside that window.
    The datum line extends ``datum_margin`` meters beyond the surface traces on
    both sides (clipped to the grid), so oblique energy crossing the slab is
    not lost to the trace aperture.
    """

    z_surface: float
    delta_z: float
    x_coords: np.ndarray
    time: TimeAxis
    medium: Medium
    scheme: FdScheme = FdScheme()
    crop: bool = True
    pad_cells: int = 4
    datum_margin: float = 1000.0

    def __post_init__(self):
        object.__setattr__(self, "x_coords", np.atleast_1d(np.asarray(self.x_coords, dtype=float)))
        g = self.medium.grid
        if abs(self.delta_z) < 2 * g.dz - 1e-9:
            raise GeometryError(f"|delta_z| = {abs(self.delta_z):g} m is below two cells ({2 * g.dz:g} m)")
        check_interior(g, self.z_surface, self.x_coords, what="slab surface")
        check_interior(g, self.datum, self.x_coords, what="slab datum")
        if self.datum_margin < 0:
            raise ValueError("datum_margin must be non-negative")

    @property
    def datum_x(self) -> np.ndarray:
        x = self.x_coords
        if self.datum_margin == 0 or x.size < 2:
            return x
        g = self.medium.grid
        step = (x[-1] - x[0]) / (x.size - 1)
        n_lo = int(min(self.datum_margin, x[0] - g.x0) // step)
        n_hi = int(min(self.datum_margin, g.x_max - x[-1]) // step)
        return x[0] + step * np.arange(-n_lo, x.size + n_hi)

    @property
    def datum(self) -> float:
        return self.z_surface + self.delta_z

    @property
    def space(self) -> GatherSpace:
        return GatherSpace(self.z_surface, self.x_coords, self.time)

    def slab_medium(self) -> Medium:
        if not self.crop:
            return self.medium
        lo, hi = sorted((self.z_surface, self.datum))
        return crop_medium_z(self.medium, lo, hi, self.pad_cells)

    def op_config(self) -> OpConfig:
        return OpConfig(self.slab_medium(), self.scheme, self.z_surface, self.datum,
                        self.x_coords, self.time, CAUSAL, self.datum_x)


def lambda_tilde(cfg: SlabConfig) -> LinearOp:
    """``-8 V^T (f -> p)``: pressure trace on the surface to the defect source generating it."""
    oc = cfg.op_config()
    op = LAMBDA_SCALE * (make_V(oc).T @ make_S_offdiag(oc, "f", "p"))
    op.label = f"Lt(z={cfg.z_surface:g}, dz={cfg.delta_z:g})"
    return op


def _swap_sandwich(oc: OpConfig, slot: str, scale: float, label: str) -> LinearOp:
    """``scale * Pi_s S^T X S Pi_s^T`` with ``X`` exchanging pressure and velocity."""
    prop = oc.propagator()
    space = oc.src_space

    def fwd(phi: Gather) -> Gather:
        sv = SourceVector.pressure_only(phi) if slot == "h" else SourceVector.force_only(phi)
        rec = prop.forward(sv, [oc.z_rec], oc.rec_x, CAUSAL, use_h=slot == "h",
                           use_f=slot == "f")[oc.z_rec]
        swapped = Record(rec.vz.with_values(rec.vz.values), rec.p.with_values(rec.p.values))
        back = prop.adjoint({oc.z_rec: swapped}, oc.z_src, oc.x_coords, CAUSAL,
                            want_h=slot == "h", want_f=slot == "f")
        out = back.h if slot == "h" else back.f
        return out * scale

    return LinearOp(space, space, fwd, fwd, label)


def wm_inv(cfg: SlabConfig) -> LinearOp:
    """Symmetrized pressure-to-source operator; one forward and one adjoint run."""
    return _swap_sandwich(cfg.op_config(), "f", WM_INV_SCALE,
                          f"Wm^-1(z={cfg.z_surface:g}, dz={cfg.delta_z:g})")


def wd(cfg: SlabConfig) -> LinearOp:
    """Data-space weight: the same construction anchored on the receiver surface."""
    op = wm_inv(cfg)
    op.label = f"Wd(z={cfg.z_surface:g}, dz={cfg.delta_z:g})"
    return op


def wm(cfg: SlabConfig, scale: float = WM_SCALE) -> LinearOp:
    """Symmetrized approximate inverse of the pressure-to-source operator.

    Expects the datum at the far surface (``delta_z = z_r - z_s``) and no crop
    when the model between the surfaces is heterogeneous.
    """
    return _swap_sandwich(cfg.op_config(), "h", scale,
                          f"Wm(z={cfg.z_surface:g}, dz={cfg.delta_z:g})")


def lambda_symbol_apply(phi: Gather, kappa: float, rho: float, sign: int = 1,
                        convention: str = "spec", taper: float = 0.1) -> Gather:
    """Homogeneous-medium pressure-to-source multiplier applied by 2D FFT in ``(x, t)``.

    ``convention='spec'``: ``sign * 2 sqrt(kappa rho) (1 - s)^(-1/2)``;
    ``convention='physical'``: ``sign * 2 (kappa rho)^(-1/2) (1 - s)^(1/2)``,
    with ``s = kappa xi^2 / (rho omega^2)``. Components with ``s >= 1`` are
    zeroed; a cosine taper over the last ``taper`` fraction of the cutoff
    wavenumber ``|omega|/c`` smooths the edge.
    """
    if convention not in ("spec", "physical"):
        raise ValueError("convention must be 'spec' or 'physical'")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    ntr, nt = phi.shape
    nx = 1 << int(math.ceil(math.log2(2 * ntr)))
    ntf = 1 << int(math.ceil(math.log2(2 * nt)))
    spec = np.fft.rfft(phi.values, ntf, axis=1)
    spec = np.fft.fft(spec, nx, axis=0)
    xi = 2 * np.pi * np.fft.fftfreq(nx, phi.dx_trace)[:, None]
    om = 2 * np.pi * np.fft.rfftfreq(ntf, phi.time.dt)[None, :]
    c = math.sqrt(kappa / rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(om > 0, np.abs(xi) * c / om, np.where(xi == 0, 0.0, np.inf))
    s = ratio ** 2
    live = s < 1.0
    one_minus = np.where(live, 1.0 - s, 1.0)
    if convention == "spec":
        mult = 2.0 * math.sqrt(kappa * rho) / np.sqrt(one_minus)
    else:
        mult = 2.0 / math.sqrt(kappa * rho) * np.sqrt(one_minus)
    mult = np.where(live, sign * mult, 0.0)
    if taper > 0:
        edge = 1.0 - taper
        band = live & (ratio > edge)
        mult[band] *= 0.5 * (1.0 + np.cos(np.pi * (ratio[band] - edge) / taper))
    out = np.fft.irfft(np.fft.ifft(spec * mult, axis=0), ntf, axis=1)
    return phi.with_values(out[:ntr, :nt])


def plane_wave_probe(x_coords, time: TimeAxis, slowness: float, wavelet, x_center: float,
                     taper_traces: int = 20) -> np.ndarray:
    """Traces ``w(t - slowness*(x - x_center))`` with cosine-tapered ends, shifted by FFT."""
    x = np.asarray(x_coords, dtype=float)
    w = np.asarray(wavelet, dtype=float)
    nt = w.size
    nf = 1 << int(math.ceil(math.log2(2 * nt)))
    f = np.fft.rfftfreq(nf, time.dt)
    W = np.fft.rfft(w, nf)
    shift = slowness * (x - x_center)
    vals = np.fft.irfft(W[None, :] * np.exp(-2j * np.pi * f[None, :] * shift[:, None]), nf, axis=1)[:, :nt]
    ramp = np.ones(x.size)
    n = min(taper_traces, x.size // 2)
    if n > 0:
        r = 0.5 * (1 - np.cos(np.pi * (np.arange(n) + 0.5) / n))
        ramp[:n] = r
        ramp[-n:] = r[::-1]
    return vals * ramp[:, None]
