"""First-order kinetic finite-volume solver for entropy-closed moment systems.

Each step reconstructs the ansatz density ``f = exp(alpha . m)`` in every
cell, upwinds it node by node at the faces, integrates the face fluxes and
the isotropic scattering operator with the velocity quadrature and takes an
explicit Euler step on the moments.

Vacuum is represented by an isotropic floor density (``floor``) because zero
moments are not realizable for this closure.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .entropy import entropy_functional, exponent
from .errors import ConvergenceError, RealizabilityError
from .icnn import IcnnModel, infer_scaled
from .newton import NewtonConfig, newton_batch
from .quadrature import MomentBasis, build_gauss_legendre, build_projected_sphere
from .realizability import margins

log = logging.getLogger(__name__)

CASES = ("inflow-1d-m1", "inflow-1d-m2", "periodic-2d-m1")


@dataclass(frozen=True)
class Mesh:
    """Uniform Cartesian mesh on an interval or a rectangle."""

    lower: tuple
    upper: tuple
    cells: tuple
    boundary: str = "periodic"   # "periodic" or "inflow" (1D only)

    def __post_init__(self):
        if not len(self.lower) == len(self.upper) == len(self.cells):
            raise ValueError("lower, upper and cells need one entry per axis")
        if any(n < 1 for n in self.cells):
            raise ValueError("every axis needs at least one cell")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("upper bounds must exceed lower bounds")
        if self.boundary not in ("periodic", "inflow"):
            raise ValueError(f"unknown boundary type {self.boundary!r}")

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_area(self) -> float:
        return float(np.prod(self.spacing))

    def face_length(self, axis: int) -> float:
        """Length of a face normal to ``axis`` (1 in 1D)."""
        return float(np.prod([h for k, h in enumerate(self.spacing) if k != axis]))

    def axis_centers(self, axis: int) -> np.ndarray:
        lo, h = self.lower[axis], self.spacing[axis]
        return lo + h * (np.arange(self.cells[axis]) + 0.5)

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``(*cells, dimension)``."""
        grids = np.meshgrid(*[self.axis_centers(k) for k in range(self.dimension)], indexing="ij")
        return np.stack(grids, axis=-1)


@dataclass(frozen=True)
class CaseConfig:
    case: str = "inflow-1d-m1"
    T: float = 0.7
    n_x: int = 100
    n_v: int = 28
    cfl: float = 0.05
    sigma: float = 1.0
    order: int = 1
    n_phi: int = 20
    inflow: float = 0.5
    floor: float = 1e-6
    reconstruct: bool | None = None   # None: on for icnn, off for newton
    newton_tol: float = 1e-10
    check_every: int = 1

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {', '.join(CASES)}")
        if not (self.T > 0 and self.n_x > 0 and self.cfl > 0 and self.n_v > 0):
            raise ValueError("T, n_x, n_v and cfl must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not self.floor > 0:
            raise ValueError("floor density must be positive")
        if self.dimension == 2 and self.n_v % self.n_phi:
            raise ValueError("2D n_v must be a multiple of n_phi")

    @property
    def dimension(self) -> int:
        return 2 if self.case.startswith("periodic-2d") else 1

    def basis(self) -> MomentBasis:
        if self.dimension == 1:
            return MomentBasis(self.order, build_gauss_legendre(self.n_v))
        return MomentBasis(self.order, build_projected_sphere(self.n_v // self.n_phi, self.n_phi))

    def mesh(self) -> Mesh:
        if self.dimension == 1:
            return Mesh((0.0,), (1.0,), (self.n_x,), "inflow")
        return Mesh((-1.5, -1.5), (1.5, 1.5), (self.n_x, self.n_x), "periodic")


def case_defaults(case: str, **overrides) -> CaseConfig:
    """Configuration of a named test case; keyword arguments override."""
    base = {
        "inflow-1d-m1": dict(T=0.7, n_x=100, n_v=28, cfl=0.05, sigma=1.0, order=1),
        "inflow-1d-m2": dict(T=0.7, n_x=100, n_v=28, cfl=0.05, sigma=1.0, order=2),
        "periodic-2d-m1": dict(T=1.84, n_x=100, n_v=200, cfl=0.1, sigma=0.0, order=1),
    }
    if case not in base:
        raise ValueError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    return CaseConfig(case=case, **{**base[case], **overrides})


def timestep_size(cfg: CaseConfig, mesh: Mesh) -> float:
    """CFL step ``cfl * dx / d`` for unit maximal speed."""
    return cfg.cfl * min(mesh.spacing) / mesh.dimension


def step_count(cfg: CaseConfig, mesh: Mesh) -> int:
    """Number of Euler steps on ``(0, T]``.

    One fewer than ``T / dt`` rounded up, which reproduces the tabulated step
    counts (1399 and 1226); the run uses ``dt = T / n`` to land on ``T``.
    """
    ratio = cfg.T / timestep_size(cfg, mesh)
    return max(1, math.ceil(ratio - 1e-9) - 1)


@dataclass
class SolverState:
    u: np.ndarray                      # (*cells, n)
    alpha: np.ndarray | None = None    # closure of ``u`` (warm start for Newton)
    t: float = 0.0
    step: int = 0

    def copy(self) -> "SolverState":
        return SolverState(self.u.copy(), None if self.alpha is None else self.alpha.copy(),
                           self.t, self.step)


# -- discrete operators -------------------------------------------------------

def upwind_flux(f_left, f_right, normal, basis: MomentBasis) -> np.ndarray:
    """Kinetic upwind moment flux ``sum_q w_q (v_q . n) m(v_q) f_up(v_q)``."""
    rule = basis.rule
    n = np.atleast_1d(np.asarray(normal, dtype=float))
    if n.size != rule.dimension:
        raise ValueError("normal must have one entry per velocity dimension")
    vn = np.einsum("qk,k->q", rule.nodes.reshape(rule.n_q, -1), n)
    f_up = np.where(vn > 0, f_left, f_right)
    return np.einsum("...q,iq->...i", f_up * (rule.weights * vn), basis.eval_table)


def collision_moments(u, sigma: float, basis: MomentBasis) -> np.ndarray:
    """Closed-form ``<m Q(f)>`` for isotropic scattering, from the moments.

    ``Q(f) = sigma (<f>/<1> - f)`` gives ``D = sigma (<m> u0 / <1> - u)``;
    the mass component is set to exactly zero.
    """
    u = np.asarray(u, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    mean_m = basis.eval_table @ basis.rule.weights / basis.mass
    d = sigma * (mean_m * u[..., :1] - u)
    d[..., 0] = 0.0
    return d


def collision_moments_nodal(f, sigma: float, basis: MomentBasis) -> np.ndarray:
    """``<m Q(f)>`` evaluated node by node from nodal densities."""
    w, m = basis.rule.weights, basis.eval_table
    f = np.asarray(f, dtype=float)
    avg = np.einsum("...q,q->...", f, w) / basis.mass
    q = sigma * (avg[..., None] - f)
    d = np.einsum("...q,iq->...i", q * w, m)
    d[..., 0] = 0.0
    return d


# -- closure backends --------------------------------------------------------

class NewtonBackend:
    """Newton closure on normalized moments, warm started per cell."""

    name = "newton"

    def __init__(self, basis: MomentBasis, cfg: NewtonConfig | None = None):
        self.basis = basis
        self.cfg = cfg or NewtonConfig()

    def __call__(self, u, warm=None):
        flat = u.reshape(-1, u.shape[-1])
        u0 = flat[:, 0]
        ubar = flat / u0[:, None]
        start = None
        if warm is not None:
            start = warm.reshape(flat.shape).copy()
            start[:, 0] -= np.log(u0)
        res = newton_batch(ubar, self.basis, self.cfg, start)
        bad = np.flatnonzero(~res.converged)
        if bad.size:
            c = int(bad[0])
            raise ConvergenceError(
                f"Newton closure failed ({res.failure[c]}) in cell {c} for u={flat[c].tolist()}",
                cell=c, moment=flat[c].copy())
        alpha = res.alpha.copy()
        alpha[:, 0] += np.log(u0)
        return alpha.reshape(u.shape)


class IcnnBackend:
    """Neural closure; rescales the normalized prediction by ``u0``."""

    name = "icnn"

    def __init__(self, model: IcnnModel, basis: MomentBasis):
        if model.input_dim != basis.reduced_size:
            raise ValueError("model input size does not match the basis")
        self.model = model
        self.basis = basis

    def __call__(self, u, warm=None):
        flat = u.reshape(-1, u.shape[-1])
        return infer_scaled(self.model, flat, self.basis).alpha.reshape(u.shape)


def make_backend(kind, basis: MomentBasis, model: IcnnModel | None = None,
                 newton: NewtonConfig | None = None):
    if kind == "newton":
        return NewtonBackend(basis, newton)
    if kind == "icnn":
        if model is None:
            raise ValueError("the icnn backend needs a trained model")
        return IcnnBackend(model, basis)
    raise ValueError(f"unknown closure backend {kind!r}")


# -- solver -------------------------------------------------------------------

class KineticSolver:
    def __init__(self, cfg: CaseConfig, backend, basis: MomentBasis | None = None):
        self.cfg = cfg
        self.basis = basis or cfg.basis()
        self.mesh = cfg.mesh()
        self.backend = backend
        self.reconstruct = (backend.name == "icnn") if cfg.reconstruct is None else cfg.reconstruct
        self.n_steps = step_count(cfg, self.mesh)
        self.dt = cfg.T / self.n_steps
        w, m = self.basis.rule.weights, self.basis.eval_table
        self.floor_moments = cfg.floor * (m @ w)
        nodes = self.basis.rule.nodes.reshape(self.basis.rule.n_q, -1)
        if cfg.dimension == 1:
            # ghost densities: prescribed inflow for mu > 0 on the left, floor otherwise
            self.ghost_left = np.where(nodes[:, 0] > 0, cfg.inflow, cfg.floor)
            self.ghost_right = np.full(self.basis.rule.n_q, cfg.floor)

    def initial_state(self) -> SolverState:
        if self.cfg.dimension == 1:
            u = np.broadcast_to(self.floor_moments, (*self.mesh.cells, self.basis.size)).copy()
        else:
            xy = self.mesh.centers()
            u0 = 1.5 + np.cos(2 * np.pi * xy[..., 0]) * np.cos(2 * np.pi * xy[..., 1])
            u = np.zeros((*self.mesh.cells, self.basis.size))
            u[..., 0] = u0
            u[..., 1] = 0.3 * u0
            u[..., 2] = 0.3 * u0
        return SolverState(u)

    def closure(self, state: SolverState) -> np.ndarray:
        state.alpha = self.backend(state.u, state.alpha)
        return state.alpha

    def densities(self, alpha) -> np.ndarray:
        return np.exp(exponent(alpha, self.basis))

    def flux_divergence(self, f) -> np.ndarray:
        """``G(i)``: net outward moment flux per unit cell area."""
        mesh, basis = self.mesh, self.basis
        G = np.zeros((*f.shape[:-1], basis.size))
        for axis in range(mesh.dimension):
            normal = np.eye(mesh.dimension)[axis]
            if mesh.boundary == "periodic":
                right = np.roll(f, -1, axis=axis)
                face = upwind_flux(f, right, normal, basis)          # face i+1/2
                G += (face - np.roll(face, 1, axis=axis)) * (mesh.face_length(axis) / mesh.cell_area)
            else:
                ext = np.concatenate([self.ghost_left[None], f, self.ghost_right[None]], axis=0)
                face = upwind_flux(ext[:-1], ext[1:], normal, basis)  # faces 1/2 .. n+1/2
                G += (face[1:] - face[:-1]) / mesh.spacing[0]
        return G

    def step(self, state: SolverState) -> SolverState:
        alpha = state.alpha if state.alpha is not None else self.closure(state)
        f = self.densities(alpha)
        u = state.u
        if self.reconstruct:
            u = np.einsum("...q,iq->...i", f * self.basis.rule.weights, self.basis.eval_table)
        G = self.flux_divergence(f)
        D = collision_moments_nodal(f, self.cfg.sigma, self.basis)
        new = SolverState(u + self.dt * (D - G), alpha.copy(), state.t + self.dt, state.step + 1)
        if new.step % self.cfg.check_every == 0 or new.step == self.n_steps:
            self.check_realizable(new)
        self.closure(new)
        return new

    def check_realizable(self, state: SolverState) -> None:
        flat = state.u.reshape(-1, self.basis.size)
        u0 = flat[:, 0]
        bad = ~(u0 > 0)
        if not bad.any():
            bad = ~(margins(flat[:, 1:] / u0[:, None], self.basis) > 0)
        if bad.any():
            c = int(np.flatnonzero(bad)[0])
            raise RealizabilityError(
                f"moment in cell {c} left the realizable set at step {state.step}: "
                f"u={flat[c].tolist()}", cell=c, moment=flat[c].copy())

    def total_mass(self, state: SolverState) -> float:
        return float(state.u[..., 0].sum() * self.mesh.cell_area)

    def total_entropy(self, state: SolverState) -> float:
        h = entropy_functional(state.u, state.alpha, self.basis)
        return float(np.sum(h) * self.mesh.cell_area)


@dataclass
class RunResult:
    final: SolverState
    diagnostics: list = field(default_factory=list)
    n_steps: int = 0
    dt: float = 0.0
    compare: "RunResult | None" = None
    error_field: np.ndarray | None = None


def run_case(cfg: CaseConfig, backend="newton", model: IcnnModel | None = None,
             newton: NewtonConfig | None = None, steps: int | None = None,
             callback=None) -> RunResult:
    """Run a test case and record mass and entropy after every step."""
    basis = cfg.basis()
    newton = newton or NewtonConfig(tolerance=cfg.newton_tol)
    solver = KineticSolver(cfg, make_backend(backend, basis, model, newton), basis)
    state = solver.initial_state()
    solver.check_realizable(state)
    solver.closure(state)
    diags = [_diag_row(solver, state)]
    n = solver.n_steps if steps is None else min(steps, solver.n_steps)
    for _ in range(n):
        state = solver.step(state)
        diags.append(_diag_row(solver, state))
        if callback is not None:
            callback(state, diags[-1])
    return RunResult(state, diags, n, solver.dt)


def _diag_row(solver, state):
    return {"step": state.step, "t": state.t, "mass": solver.total_mass(state),
            "entropy": solver.total_entropy(state)}


def relative_error(u_test, u_ref, component: int = 0) -> np.ndarray:
    return np.abs(u_test[..., component] - u_ref[..., component]) / np.abs(u_ref[..., component])


def run_compare(cfg: CaseConfig, model: IcnnModel, newton: NewtonConfig | None = None,
                steps: int | None = None) -> RunResult:
    """Advance Newton- and ICNN-closed runs side by side.

    Diagnostics carry both runs' mass and entropy plus the mean and maximum
    per-cell relative error of ``u0`` (ICNN against Newton).
    """
    basis = cfg.basis()
    newton = newton or NewtonConfig(tolerance=cfg.newton_tol)
    ref = KineticSolver(cfg, NewtonBackend(basis, newton), basis)
    net = KineticSolver(cfg, IcnnBackend(model, basis), basis)
    a, b = ref.initial_state(), net.initial_state()
    ref.closure(a)
    net.closure(b)
    diags = []
    n = ref.n_steps if steps is None else min(steps, ref.n_steps)
    for k in range(n + 1):
        if k:
            a, b = ref.step(a), net.step(b)
        err = relative_error(b.u, a.u)
        diags.append({"step": a.step, "t": a.t,
                      "mass": ref.total_mass(a), "entropy": ref.total_entropy(a),
                      "mass_icnn": net.total_mass(b), "entropy_icnn": net.total_entropy(b),
                      "mean_rel_err_u0": float(err.mean()), "max_rel_err_u0": float(err.max())})
    res = RunResult(a, diags, n, ref.dt, RunResult(b, [], n, net.dt), relative_error(b.u, a.u))
    return res


# -- output ------------------------------------------------------------------

def write_diagnostics(rows, path) -> None:
    """Per-step diagnostics CSV (step, t, mass, entropy, optional error columns)."""
    if not rows:
        raise ValueError("no diagnostics to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def write_fields(state: SolverState, mesh: Mesh, path, extra: dict | None = None) -> None:
    """Final-state dump: cell center coordinates, then moment components."""
    xy = mesh.centers().reshape(-1, mesh.dimension)
    u = state.u.reshape(len(xy), -1)
    cols = ["x", "y"][: mesh.dimension] + [f"u{i}" for i in range(u.shape[1])]
    data = [xy, u]
    for name, vals in (extra or {}).items():
        cols.append(name)
        data.append(np.asarray(vals, dtype=float).reshape(len(xy), 1))
    table = np.concatenate(data, axis=1)
    with open(path, "w") as fh:
        fh.write(f"# t={state.t!r} step={state.step}\n")
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_fields(path) -> tuple[list, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    cols = lines[0].split(",")
    return cols, np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


__all__ = [
    "CASES", "CaseConfig", "IcnnBackend", "KineticSolver", "Mesh", "NewtonBackend",
    "RunResult", "SolverState", "case_defaults", "collision_moments",
    "collision_moments_nodal", "make_backend", "read_fields", "relative_error", "run_case",
    "run_compare", "step_count", "timestep_size", "upwind_flux", "write_diagnostics",
    "write_fields",
]
