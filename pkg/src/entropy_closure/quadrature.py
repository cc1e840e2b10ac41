"""Velocity-space quadrature rules and monomial moment bases.

Every velocity integral in the package is approximated as ``<g> ~ sum_q w_q g(v_q)``.
Reductions over the quadrature axis go through :func:`numpy.einsum` with the
default (non-BLAS) path so the summation order for one sample does not depend
on how many samples are evaluated together.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and strictly positive weights on the velocity domain.

    ``nodes`` has shape ``(n_q,)`` for the 1D interval [-1, 1] and ``(n_q, 2)``
    for the projected unit sphere in 2D.
    """

    dimension: int
    nodes: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        for arr in (self.nodes, self.weights):
            arr.setflags(write=False)

    @property
    def n_q(self) -> int:
        return self.weights.shape[0]

    def velocity(self, axis: int = 0) -> np.ndarray:
        """Component ``axis`` of the velocity at every node."""
        if self.dimension == 1:
            if axis != 0:
                raise ValueError("1D rule has a single velocity component")
            return self.nodes
        return self.nodes[:, axis]


def build_gauss_legendre(n_q: int) -> QuadratureRule:
    """The ``n_q``-point Gauss-Legendre rule on [-1, 1]."""
    if int(n_q) != n_q or n_q < 1:
        raise ValueError(f"n_q must be a positive integer, got {n_q!r}")
    mu, w = np.polynomial.legendre.leggauss(int(n_q))
    # symmetrize against the tiny asymmetry leggauss leaves in the last bit
    mu = 0.5 * (mu - mu[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(1, mu, w, f"gauss-legendre:{int(n_q)}")


def build_projected_sphere(n_mu: int, n_phi: int) -> QuadratureRule:
    """Tensorized Gauss-Legendre in ``mu`` times uniform ``phi``, projected to 2D.

    Nodes are ``(sqrt(1-mu^2) cos phi, sqrt(1-mu^2) sin phi)`` with
    ``phi_k = (k + 1/2) 2 pi / n_phi``. Weights are scaled so they sum to 2 pi,
    which makes ``1/(2 pi)`` the isotropic redistribution kernel.
    """
    for name, n in (("n_mu", n_mu), ("n_phi", n_phi)):
        if int(n) != n or n < 1:
            raise ValueError(f"{name} must be a positive integer, got {n!r}")
    gl = build_gauss_legendre(n_mu)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    mu, ph = np.meshgrid(gl.nodes, phi, indexing="ij")
    r = np.sqrt(1.0 - mu**2)
    nodes = np.stack([(r * np.cos(ph)).ravel(), (r * np.sin(ph)).ravel()], axis=1)
    # sum(w_mu) = 2 and sum(dphi) = 2 pi, so halve to land on 2 pi
    weights = 0.5 * np.outer(gl.weights, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return QuadratureRule(2, nodes, weights, f"projected-sphere:{int(n_mu)}x{int(n_phi)}")


def rule_from_label(label: str) -> QuadratureRule:
    """Rebuild a rule from its ``label`` (``gauss-legendre:28``, ``projected-sphere:10x20``)."""
    kind, _, size = label.partition(":")
    try:
        if kind == "gauss-legendre":
            return build_gauss_legendre(int(size))
        if kind == "projected-sphere":
            n_mu, n_phi = size.split("x")
            return build_projected_sphere(int(n_mu), int(n_phi))
    except ValueError:
        pass
    raise ValueError(f"unknown quadrature label {label!r}")


def bracket(values_at_nodes, rule: QuadratureRule) -> np.ndarray | float:
    """Quadrature ``sum_q w_q values_q``; leading axes are treated as a batch."""
    values = np.asarray(values_at_nodes, dtype=float)
    if values.shape[-1:] != (rule.n_q,):
        raise ValueError(
            f"expected values over {rule.n_q} nodes, got shape {values.shape}")
    out = np.einsum("...q,q->...", values * rule.weights, np.ones(rule.n_q))
    return out if out.ndim else float(out)


def _monomial_exponents(order: int, dimension: int) -> tuple[tuple[int, ...], ...]:
    if dimension == 1:
        return tuple((k,) for k in range(order + 1))
    exps = []
    for degree in range(order + 1):
        # v_x^a v_y^b with a + b = degree, v_x powers first
        exps.extend((degree - b, b) for b in range(degree + 1))
    return tuple(exps)


@dataclass(frozen=True, eq=False)
class MomentBasis:
    """Monomial basis of total degree ``order`` evaluated on a quadrature rule.

    ``eval_table[i, q] = m_i(v_q)``; row 0 is the constant function 1. In 1D
    the basis is ``[1, mu, ..., mu^N]``; in 2D ``[1, v_x, v_y, v_x^2, ...]``.
    """

    order: int
    rule: QuadratureRule
    exponents: tuple = field(init=False, repr=False)
    eval_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 0:
            raise ValueError(f"order must be a nonnegative integer, got {self.order!r}")
        exps = _monomial_exponents(self.order, self.rule.dimension)
        cols = [self.rule.velocity(a) for a in range(self.rule.dimension)]
        table = np.empty((len(exps), self.rule.n_q))
        for i, e in enumerate(exps):
            row = np.ones(self.rule.n_q)
            for c, p in zip(cols, e):
                if p:
                    row = row * c**p
            table[i] = row
        table.setflags(write=False)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "eval_table", table)

    @property
    def dimension(self) -> int:
        return self.rule.dimension

    @property
    def size(self) -> int:
        return self.eval_table.shape[0]

    @property
    def reduced_size(self) -> int:
        return self.size - 1

    @property
    def mass(self) -> float:
        """``<1>``: 2 in 1D and 2 pi in 2D."""
        return bracket(np.ones(self.rule.n_q), self.rule)

    def describe(self) -> str:
        return f"{self.dimension}D M{self.order}"


def moments_of(density_at_nodes, basis: MomentBasis) -> np.ndarray:
    """Moments ``u_i = sum_q w_q m_i(v_q) f(v_q)``; batch over leading axes."""
    f = np.asarray(density_at_nodes, dtype=float)
    if f.shape[-1:] != (basis.rule.n_q,):
        raise ValueError(
            f"expected density over {basis.rule.n_q} nodes, got shape {f.shape}")
    if f.size and f.min() < -1e-12:
        warnings.warn("density has negative nodal values", RuntimeWarning, stacklevel=2)
    return np.einsum("...q,iq->...i", f * basis.rule.weights, basis.eval_table)

