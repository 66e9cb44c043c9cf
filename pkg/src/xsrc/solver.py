"""Time-reversal approximate inverse, CG and preconditioned CG for the penalized source problem.

The normal system is ``N h = S^T W_d d`` with
``N = S^T W_d S + alpha^2 A^T W_m A``; identity weights give the plain
Euclidean least-squares problem.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SolverBreakdown
from .grid import Gather, gather_dot
from .wave_ops import DistancePenalty, GatherSpace, LinearOp, dot_test


@dataclass(frozen=True, eq=False)
class InversionProblem:
    """Data, modeling operator, penalty and norm weights; ``None`` weights mean identity."""

    S: LinearOp
    A: DistancePenalty
    d: Gather
    alpha: float = 0.0
    W_d: LinearOp | None = None
    W_m: LinearOp | None = None
    Wm_inv: LinearOp | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.S.range.check(self.d)
        if self.A.domain.shape != self.S.domain.shape:
            raise ValueError("penalty and modeling operator act on different spaces")
        for name in ("W_d", "W_m", "Wm_inv"):
            op = getattr(self, name)
            if op is None:
                continue
            space = self.S.range if name == "W_d" else self.S.domain
            if op.domain.shape != space.shape or op.range.shape != space.shape:
                raise ValueError(f"{name} does not act on the {'data' if name == 'W_d' else 'model'} space")

    @property
    def model_space(self) -> GatherSpace:
        return self.S.domain

    def euclidean(self) -> "InversionProblem":
        """Same data and penalty with all weights set to the identity."""
        return replace(self, W_d=None, W_m=None, Wm_inv=None)

    def with_alpha(self, alpha: float) -> "InversionProblem":
        return replace(self, alpha=alpha)


def _apply(op: LinearOp | None, g: Gather) -> Gather:
    return g if op is None else op.apply(g)


class NormalOperator(LinearOp):
    """``N = S^T W_d S + alpha^2 A^T W_m A``, symmetric by construction."""

    def __init__(self, problem: InversionProblem):
        self.problem = problem
        space = problem.model_space
        super().__init__(space, space, self._apply_n, self._apply_n, f"N(alpha={problem.alpha:g})")
        self.rhs = problem.S.adjoint_apply(_apply(problem.W_d, problem.d))

    def apply_with_data(self, h: Gather) -> tuple[Gather, Gather]:
        """Return ``(N h, S h)``; the second output feeds the misfit recursion."""
        pb = self.problem
        self.domain.check(h)
        sh = pb.S.apply(h)
        nh = pb.S.adjoint_apply(_apply(pb.W_d, sh))
        if pb.alpha > 0:
            ah = pb.A.apply(h)
            nh = nh + pb.A.apply(_apply(pb.W_m, ah)) * pb.alpha ** 2
        return nh.at_depth(self.domain.depth_z), sh

    def _apply_n(self, h: Gather) -> Gather:
        return self.apply_with_data(h)[0]


def normal_op(problem: InversionProblem) -> NormalOperator:
    return NormalOperator(problem)


def preconditioner(problem: InversionProblem) -> LinearOp:
    """``(I + alpha^2 A^T A)^(-1/2) Wm_inv (I + alpha^2 A^T A)^(-1/2)``."""
    space = problem.model_space
    core = problem.Wm_inv
    if problem.alpha == 0:
        if core is None:
            return LinearOp(space, space, lambda g: g, lambda g: g, "I")
        return core
    dsc = problem.A.inv_sqrt_op(problem.alpha)
    if core is None:
        return dsc @ dsc
    op = dsc @ core @ dsc
    op.label = f"Minv(alpha={problem.alpha:g})"
    return op


def approx_inverse(d: Gather, V: LinearOp) -> Gather:
    """Time-reversal estimate ``4 V^T d`` of the pressure source behind ``d``."""
    return V.adjoint_apply(d) * 4.0


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    normal_residual_norms: list = field(default_factory=list)
    data_misfit_norms: list = field(default_factory=list)
    wall_seconds: list = field(default_factory=list)
    true_residual_gaps: list = field(default_factory=list)
    h: Gather | None = None
    setup_seconds: float = 0.0
    converged: bool = False

    @property
    def relative_residuals(self) -> np.ndarray:
        r = np.asarray(self.normal_residual_norms)
        return r / r[0] if r.size and r[0] > 0 else r

    def iterations_to_reach(self, level: float, relative: bool = True) -> int | None:
        """First iteration whose residual is at or below ``level`` (None if never)."""
        r = self.relative_residuals if relative else np.asarray(self.normal_residual_norms)
        hit = np.nonzero(r <= level)[0]
        return int(hit[0]) if hit.size else None

    def rows(self):
        for k, (r, m, w) in enumerate(zip(self.normal_residual_norms, self.data_misfit_norms,
                                          self.wall_seconds)):
            yield k, r, m, w

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iter", "normal_residual", "data_misfit", "wall_seconds"])
            for k, r, m, w in self.rows():
                wr.writerow([k, repr(float(r)), repr(float(m)), f"{w:.6f}"])


def _check_curvature(pq: float, p: Gather, q: Gather, k: int):
    scale = p.norm() * q.norm()
    if not math.isfinite(pq) or pq <= 1e-14 * scale:
        raise SolverBreakdown("non-positive curvature", iteration=k, pq=float(pq), scale=float(scale))


def _log(rep: SolveReport, t_start: float, r: Gather, sh: Gather, d: Gather):
    rep.normal_residual_norms.append(r.norm())
    rep.data_misfit_norms.append((sh - d).norm())
    rep.wall_seconds.append(time.perf_counter() - t_start)


def _true_gap(N: NormalOperator, h: Gather, r: Gather) -> float:
    r_true = N.rhs - N.apply(h)
    return (r_true - r).norm() / max(r.norm(), 1e-300)


def cg(problem: InversionProblem, max_iter: int = 100, tol: float = 1e-6, weighted: bool = False,
       true_residual_every: int = 10, callback=None) -> SolveReport:
    """Textbook conjugate gradients on the normal equations.

    ``weighted=False`` solves ``(S^T S + alpha^2 A^T A) h = S^T d``; with
    ``weighted=True`` the weighted system of ``problem`` is iterated without
    a preconditioner.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    pb = problem if weighted else problem.euclidean()
    t0 = time.perf_counter()
    N = NormalOperator(pb)
    rep = SolveReport(method="cg" if not weighted else "cg-weighted")
    rep.setup_seconds = time.perf_counter() - t0
    h = pb.model_space.zeros()
    sh = pb.S.range.zeros()
    r = N.rhs
    p = r
    rr = gather_dot(r, r)
    r0 = math.sqrt(rr)
    _log(rep, t0, r, sh, pb.d)
    for k in range(max_iter):
        if rep.normal_residual_norms[-1] <= tol * r0 or r0 == 0:
            rep.converged = True
            break
        q, sp = N.apply_with_data(p)
        pq = gather_dot(p, q)
        _check_curvature(pq, p, q, k)
        a = rr / pq
        h = h + p * a
        sh = sh + sp * a
        r = r - q * a
        rr_new = gather_dot(r, r)
        p = r + p * (rr_new / rr)
        rr = rr_new
        rep.iterations = k + 1
        _log(rep, t0, r, sh, pb.d)
        if true_residual_every and rep.iterations % true_residual_every == 0:
            rep.true_residual_gaps.append((rep.iterations, _true_gap(N, h, r)))
        if callback is not None:
            callback(rep)
    else:
        rep.converged = rep.normal_residual_norms[-1] <= tol * r0
    rep.h = h
    return rep


def pcg(problem: InversionProblem, max_iter: int = 100, tol: float = 1e-6,
        M_inv: LinearOp | None = None, check_symmetry: bool = True, true_residual_every: int = 10,
        callback=None) -> SolveReport:
    """Preconditioned CG, standard form, starting from ``h = 0``.

    ``M_inv`` defaults to :func:`preconditioner`. The logged residual is the
    Euclidean norm of ``S^* d - N h_k`` so runs compare directly with :func:`cg`.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    t0 = time.perf_counter()
    N = NormalOperator(problem)
    M = preconditioner(problem) if M_inv is None else M_inv
    if check_symmetry:
        err = dot_test(M, trials=1, seed=12345)
        if err > 1e-9:
            raise SolverBreakdown("preconditioner is not symmetric", dot_test_error=float(err))
    rep = SolveReport(method="pcg")
    h = problem.model_space.zeros()
    sh = problem.S.range.zeros()
    r = N.rhs
    p = M.apply(r)
    g = p
    q, sp = N.apply_with_data(p)
    rep.setup_seconds = time.perf_counter() - t0
    gr = gather_dot(g, r)
    r0 = r.norm()
    _log(rep, t0, r, sh, problem.d)
    for k in range(max_iter):
        if rep.normal_residual_norms[-1] <= tol * r0 or r0 == 0:
            rep.converged = True
            break
        if gr <= 0:
            raise SolverBreakdown("preconditioned residual has non-positive energy", iteration=k,
                                  gr=float(gr))
        pq = gather_dot(p, q)
        _check_curvature(pq, p, q, k)
        a = gr / pq
        h = h + p * a
        sh = sh + sp * a
        r = r - q * a
        rep.iterations = k + 1
        _log(rep, t0, r, sh, problem.d)
        if true_residual_every and rep.iterations % true_residual_every == 0:
            rep.true_residual_gaps.append((rep.iterations, _true_gap(N, h, r)))
        if callback is not None:
            callback(rep)
        if rep.normal_residual_norms[-1] <= tol * r0 or k == max_iter - 1:
            break
        g = M.apply(r)
        gr_new = gather_dot(g, r)
        beta = gr_new / gr
        p = g + p * beta
        q, sp = N.apply_with_data(p)
        gr = gr_new
    rep.converged = rep.normal_residual_norms[-1] <= tol * r0
    rep.h = h
    return rep


def speedup_at_level(fast: SolveReport, slow: SolveReport, k: int) -> tuple[float, int | None]:
    """Iterations ``slow`` needs to reach ``fast``'s relative residual at iteration ``k``, over ``k``.

    Returns ``(ratio, slow_iterations)``; if ``slow`` never gets there the
    ratio is a lower bound computed from its iteration count.
    """
    level = fast.relative_residuals[k]
    n = slow.iterations_to_reach(level)
    if n is None:
        return slow.iterations / k, None
    return n / k, n
