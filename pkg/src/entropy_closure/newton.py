"""Damped Newton solver for the dual minimal-entropy problem.

The solver is vectorized over a batch of moment vectors: each iteration only
touches the samples that have not converged yet, and the arithmetic applied to
one sample does not depend on the rest of the batch.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .entropy import EXPONENT_LIMIT, entropy_functional
from .errors import BoundaryProximityError, DomainError
from .quadrature import MomentBasis

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NewtonConfig:
    tolerance: float = 1e-8
    max_iterations: int = 200
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    reg_start: float = 1e-10
    reg_max: float = 1e-2

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.armijo < 1:
            raise ValueError("Armijo constant must lie in (0, 1)")


@dataclass
class ClosureResult:
    alpha: np.ndarray
    h: float
    iterations: int
    final_gradient_norm: float
    converged: bool
    failure: str | None = None


@dataclass
class BatchResult:
    """Column-wise results for a batch of closures."""

    alpha: np.ndarray
    h: np.ndarray
    iterations: np.ndarray
    gradient_norm: np.ndarray
    converged: np.ndarray
    failure: list = field(default_factory=list)
    objective_trace: list | None = None

    def __len__(self):
        return len(self.h)

    def item(self, i: int) -> ClosureResult:
        return ClosureResult(self.alpha[i].copy(), float(self.h[i]), int(self.iterations[i]),
                             float(self.gradient_norm[i]), bool(self.converged[i]),
                             self.failure[i])

    def as_list(self) -> list[ClosureResult]:
        return [self.item(i) for i in range(len(self))]


def cold_start(u, basis: MomentBasis) -> np.ndarray:
    """Isotropic multipliers ``[ln(u0 / <1>), 0, ...]`` with the same mass as ``u``."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    alpha = np.zeros_like(u)
    alpha[:, 0] = np.log(u[:, 0] / basis.mass)
    return alpha


def _objective(alpha, u, m, w):
    """Negated dual per sample; ``inf`` where the exponent would overflow."""
    z = np.einsum("bi,iq->bq", alpha, m)
    bad = ~(z.max(axis=1) <= EXPONENT_LIMIT)
    z[bad] = 0.0
    f = np.exp(z)
    val = np.einsum("bq,q->b", f * w, np.ones(len(w))) - np.einsum("bi,bi->b", alpha, u)
    val[bad] = np.inf
    return val, f


def _factor(H, reg_start, reg_max):
    """Cholesky with an escalating diagonal shift; returns (L, ok)."""
    try:
        return np.linalg.cholesky(H), np.ones(len(H), dtype=bool)
    except np.linalg.LinAlgError:
        pass
    L = np.empty_like(H)
    ok = np.ones(len(H), dtype=bool)
    eye = np.eye(H.shape[-1])
    for b in range(len(H)):
        lam = 0.0
        while True:
            try:
                L[b] = np.linalg.cholesky(H[b] + lam * eye)
                break
            except np.linalg.LinAlgError:
                lam = reg_start if lam == 0.0 else lam * 10.0
                if lam > reg_max * (1 + 1e-12):
                    ok[b] = False
                    L[b] = eye
                    break
    return L, ok


def _cho_solve(L, g):
    # L L^T x = g for a stack of small lower-triangular factors
    y = np.linalg.solve(L, g[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), y)[..., 0]


def newton_batch(us, basis: MomentBasis, cfg: NewtonConfig | None = None,
                 warm_start=None, record_objective: bool = False) -> BatchResult:
    """Solve the dual problem for every row of ``us`` (shape ``(B, n)``)."""
    cfg = cfg or NewtonConfig()
    U = np.atleast_2d(np.asarray(us, dtype=float))
    if U.shape[-1] != basis.size:
        raise ValueError(f"moment vectors have {U.shape[-1]} entries, basis has {basis.size}")
    if not np.all(np.isfinite(U)):
        raise DomainError("moment vectors must be finite")
    if np.any(U[:, 0] <= 0):
        raise DomainError("u0 must be positive")
    B = len(U)
    alpha = cold_start(U, basis) if warm_start is None else np.array(
        np.broadcast_to(np.asarray(warm_start, dtype=float), U.shape))
    m = basis.eval_table
    w = basis.rule.weights

    iterations = np.zeros(B, dtype=int)
    gnorm = np.full(B, np.inf)
    converged = np.zeros(B, dtype=bool)
    failure: list = [None] * B
    trace = [[] for _ in range(B)] if record_objective else None

    phi, f = _objective(alpha, U, m, w)
    bad_start = ~np.isfinite(phi)
    if bad_start.any():
        # an overflowing warm start is useless; fall back to the isotropic guess
        alpha[bad_start] = cold_start(U[bad_start], basis)
        phi[bad_start], f[bad_start] = _objective(alpha[bad_start], U[bad_start], m, w)
    active = np.arange(B)

    for _ in range(cfg.max_iterations + 1):
        if active.size == 0:
            break
        a, u, fa, pa = alpha[active], U[active], f[active], phi[active]
        wf = fa * w
        g = np.einsum("bq,iq->bi", wf, m) - u
        gn = np.abs(g).max(axis=1)
        gnorm[active] = gn
        if trace is not None:
            for k, b in enumerate(active):
                trace[b].append(float(pa[k]))
        done = gn <= cfg.tolerance
        converged[active[done]] = True
        out_of_budget = (~done) & (iterations[active] >= cfg.max_iterations)
        for b in active[out_of_budget]:
            failure[b] = "max_iterations"
        keep = ~done & ~out_of_budget
        if not keep.any():
            break
        active, a, u, g, wf, pa = active[keep], a[keep], u[keep], g[keep], wf[keep], pa[keep]

        H = np.einsum("bq,iq,jq->bij", wf, m, m)
        L, ok = _factor(H, cfg.reg_start, cfg.reg_max)
        for b in active[~ok]:
            failure[b] = "singular_hessian"
        if not ok.all():
            active, a, u, g, pa, L = active[ok], a[ok], u[ok], g[ok], pa[ok], L[ok]
            if active.size == 0:
                break
        d = -_cho_solve(L, g)
        slope = np.einsum("bi,bi->b", g, d)

        t = np.ones(len(active))
        accepted = np.zeros(len(active), dtype=bool)
        new_a = a.copy()
        new_phi = pa.copy()
        new_f = np.empty((len(active), len(w)))
        pending = np.arange(len(active))
        for _bt in range(cfg.max_backtracks + 1):
            trial = a[pending] + t[pending, None] * d[pending]
            ph, ft = _objective(trial, u[pending], m, w)
            # roundoff slack so converging iterates are not rejected on noise
            slack = 64 * np.finfo(float).eps * (np.abs(pa[pending]) + 1.0)
            ok_step = ph <= pa[pending] + cfg.armijo * t[pending] * slope[pending] + slack
            idx = pending[ok_step]
            new_a[idx], new_phi[idx], new_f[idx] = trial[ok_step], ph[ok_step], ft[ok_step]
            accepted[idx] = True
            pending = pending[~ok_step]
            if pending.size == 0:
                break
            t[pending] *= cfg.shrink
        for b in active[~accepted]:
            failure[b] = "line_search"
        acc_idx = active[accepted]
        alpha[acc_idx] = new_a[accepted]
        phi[acc_idx] = new_phi[accepted]
        f[acc_idx] = new_f[accepted]
        iterations[acc_idx] += 1
        active = acc_idx

    h = entropy_functional(U, alpha, basis) if B else np.zeros(0)
    return BatchResult(alpha, np.atleast_1d(h), iterations, gnorm, converged, failure, trace)


def solve_dual(u, basis: MomentBasis, cfg: NewtonConfig | None = None,
               warm_start=None) -> ClosureResult:
    """Closure for a single moment vector.

    Non-convergence is reported through ``converged=False``; a Hessian that
    stays singular after regularization raises :class:`BoundaryProximityError`.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError("solve_dual takes one moment vector; use solve_dual_batch")
    res = newton_batch(u[None], basis, cfg, None if warm_start is None
                       else np.asarray(warm_start, dtype=float)[None]).item(0)
    if res.failure == "singular_hessian":
        raise BoundaryProximityError(
            f"dual Hessian singular at u={u.tolist()}; the moment is (numerically) "
            "on the realizable boundary")
    return res


def _batch_chunk(args):
    us, order, rule, cfg, warm = args
    return newton_batch(us, MomentBasis(order, rule), cfg, warm)


def solve_dual_batch(us, basis: MomentBasis, cfg: NewtonConfig | None = None,
                     warm_start=None, workers: int = 1) -> list[ClosureResult]:
    """Element-wise :func:`solve_dual` with failures isolated per element.

    With ``workers > 1`` the batch is split into contiguous chunks solved in
    separate processes; results come back in input order.
    """
    U = np.atleast_2d(np.asarray(us, dtype=float))
    return solve_dual_arrays(U, basis, cfg, warm_start, workers).as_list()


def solve_dual_arrays(U, basis, cfg=None, warm_start=None, workers: int = 1) -> BatchResult:
    workers = min(int(workers or 1), os.cpu_count() or 1, max(len(U), 1))
    if workers <= 1:
        return newton_batch(U, basis, cfg, warm_start)
    bounds = np.linspace(0, len(U), workers + 1).astype(int)
    warm = None if warm_start is None else np.broadcast_to(warm_start, U.shape)
    jobs = [(U[lo:hi], basis.order, basis.rule, cfg,
             None if warm is None else warm[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(workers) as ex:
        parts = list(ex.map(_batch_chunk, jobs))
    return BatchResult(
        np.concatenate([p.alpha for p in parts]), np.concatenate([p.h for p in parts]),
        np.concatenate([p.iterations for p in parts]),
        np.concatenate([p.gradient_norm for p in parts]),
        np.concatenate([p.converged for p in parts]), sum((p.failure for p in parts), []))
