"""Generated numba kernels for the staggered 2-2k leapfrog scheme and its transpose.

Stencils are unrolled per half-order ``k`` because a runtime loop over the
coefficients does not vectorize and runs about twice as slow. Arrays carry a
halo of ``k`` zero cells on every side, so the derivative operators act on
zero-extended fields and the divergence is exactly minus the transposed
gradient.

Field layout (array index ``[i, j]``): ``p`` at ``(z_i, x_j)``, ``vx`` at
``(z_i, x_{j+1/2})``, ``vz`` at ``(z_{i+1/2}, x_j)``. Pressure is stored as the
total ``p`` plus the split part ``pz``; the x part is ``p - pz``.
"""

from __future__ import annotations

from functools import lru_cache

import numba
import numpy as np

_VEL_FWD = """
def vel_fwd(p, vx, vz, bx, bz, evx, cvx, evz, cvz, h):
    nz, nx = p.shape
    for i in numba.prange(h, nz - h):
        ez = evz[i]
        cz = cvz[i]
        for j in range(h, nx - h):
            sx = {sx}
            sz = {sz}
            vx[i, j] = evx[j] * vx[i, j] - cvx[j] * bx[i, j] * sx
            vz[i, j] = ez * vz[i, j] - cz * bz[i, j] * sz
"""

_PRE_FWD = """
def pre_fwd(p, pz, vx, vz, kx, kz, epx, cpx, epz, cpz, h):
    nz, nx = p.shape
    for i in numba.prange(h, nz - h):
        ez = epz[i]
        cz = cpz[i]
        for j in range(h, nx - h):
            sx = {sx}
            sz = {sz}
            zold = pz[i, j]
            xnew = epx[j] * (p[i, j] - zold) - cpx[j] * kx[i, j] * sx
            znew = ez * zold - cz * kz[i, j] * sz
            pz[i, j] = znew
            p[i, j] = xnew + znew
"""

# transpose of pre_fwd: (p, pz) adjoint pulled back, divergence transposed into v adjoint
_PRE_ADJ_COEF = """
def pre_adj_coef(ap, apz, qx, qz, kx, kz, epx, cpx, epz, cpz, h):
    nz, nx = ap.shape
    for i in numba.prange(h, nz - h):
        ez = epz[i]
        cz = cpz[i]
        for j in range(h, nx - h):
            a = ap[i, j]
            b = apz[i, j]
            qx[i, j] = cpx[j] * kx[i, j] * a
            qz[i, j] = cz * kz[i, j] * (a + b)
            ap[i, j] = epx[j] * a
            apz[i, j] = (ez - epx[j]) * a + ez * b
"""

_PRE_ADJ_STENCIL = """
def pre_adj_stencil(avx, avz, qx, qz, h):
    nz, nx = avx.shape
    for i in numba.prange(h, nz - h):
        for j in range(h, nx - h):
            avx[i, j] += {sx}
            avz[i, j] += {sz}
"""

_VEL_ADJ_COEF = """
def vel_adj_coef(avx, avz, qx, qz, bx, bz, evx, cvx, evz, cvz, h):
    nz, nx = avx.shape
    for i in numba.prange(h, nz - h):
        ez = evz[i]
        cz = cvz[i]
        for j in range(h, nx - h):
            qx[i, j] = cvx[j] * bx[i, j] * avx[i, j]
            qz[i, j] = cz * bz[i, j] * avz[i, j]
            avx[i, j] = evx[j] * avx[i, j]
            avz[i, j] = ez * avz[i, j]
"""

_VEL_ADJ_STENCIL = """
def vel_adj_stencil(ap, qx, qz, h):
    nz, nx = ap.shape
    for i in numba.prange(h, nz - h):
        for j in range(h, nx - h):
            ap[i, j] += {s}
"""


def _fmt(c: float) -> str:
    return repr(float(c))


def _dplus(name: str, coef: np.ndarray, axis: str) -> str:
    """Forward-staggered difference: node j -> face j+1/2."""
    terms = []
    for m, a in enumerate(coef):
        if axis == "x":
            t = f"({name}[i, j + {m + 1}] - {name}[i, j - {m}])"
        else:
            t = f"({name}[i + {m + 1}, j] - {name}[i - {m}, j])"
        terms.append(f"{_fmt(a)} * {t}")
    return " + ".join(terms)


def _dminus(name: str, coef: np.ndarray, axis: str) -> str:
    """Backward-staggered difference: face j-1/2 -> node j."""
    terms = []
    for m, a in enumerate(coef):
        if axis == "x":
            t = f"({name}[i, j + {m}] - {name}[i, j - {m + 1}])"
        else:
            t = f"({name}[i + {m}, j] - {name}[i - {m + 1}, j])"
        terms.append(f"{_fmt(a)} * {t}")
    return " + ".join(terms)


class Kernels:
    """Compiled kernel set for one stencil; attributes are numba dispatchers."""

    def __init__(self, coef: np.ndarray, parallel: bool):
        coef = np.asarray(coef, dtype=float)
        self.coef = coef
        jit = numba.njit(parallel=parallel, fastmath=False, nogil=True)
        src = {
            "vel_fwd": _VEL_FWD.format(sx=_dplus("p", coef, "x"), sz=_dplus("p", coef, "z")),
            "pre_fwd": _PRE_FWD.format(sx=_dminus("vx", coef, "x"), sz=_dminus("vz", coef, "z")),
            "pre_adj_coef": _PRE_ADJ_COEF,
            # adjoint of the divergence is minus the gradient: D- transpose = -D+
            "pre_adj_stencil": _PRE_ADJ_STENCIL.format(sx=_dplus("qx", coef, "x"),
                                                       sz=_dplus("qz", coef, "z")),
            "vel_adj_coef": _VEL_ADJ_COEF,
            "vel_adj_stencil": _VEL_ADJ_STENCIL.format(
                s=_dminus("qx", coef, "x") + " + " + _dminus("qz", coef, "z")),
        }
        for name, code in src.items():
            ns = {"numba": numba, "np": np}
            exec(compile(code, f"<xsrc-kernel {name} k={coef.size}>", "exec"), ns)
            setattr(self, name, jit(ns[name]))


@lru_cache(maxsize=None)
def get_kernels(coef: tuple, parallel: bool = False) -> Kernels:
    return Kernels(np.array(coef), parallel)


@numba.njit(nogil=True)
def scatter_add(flat, idx, tr, w, vals, n):
    for e in range(idx.size):
        flat[idx[e]] += w[e] * vals[tr[e], n]


@numba.njit(nogil=True)
def collect(flat, idx, tr, w, out, n, scale):
    for e in range(idx.size):
        out[tr[e], n] += scale * w[e] * flat[idx[e]]
