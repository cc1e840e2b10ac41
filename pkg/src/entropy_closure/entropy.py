"""Maxwell-Boltzmann entropy, the dual objective and related identities.

All functions accept a single vector or a batch of vectors stacked along the
leading axes. The dual is written as a minimization,

    phi(alpha; u) = <exp(alpha . m)> - alpha . u,

whose gradient is ``<m exp(alpha . m)> - u`` and whose Hessian is
``<m m^T exp(alpha . m)>``.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, RangeError
from .quadrature import MomentBasis, bracket

#: exponents above this value are refused rather than overflowed
EXPONENT_LIMIT = 700.0


def eta(z):
    """Kinetic entropy density ``z ln z - z`` on ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("eta is defined for z > 0 only")
    out = z * np.log(z) - z
    return out if out.ndim else float(out)


def eta_prime(z):
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("eta_prime is defined for z > 0 only")
    out = np.log(z)
    return out if out.ndim else float(out)


def eta_star(y):
    """Legendre dual of :func:`eta`, ``exp(y)``."""
    out = np.exp(np.asarray(y, dtype=float))
    return out if out.ndim else float(out)


def eta_star_prime(y):
    out = np.exp(np.asarray(y, dtype=float))
    return out if out.ndim else float(out)


def exponent(alpha, basis: MomentBasis, guard: bool = True) -> np.ndarray:
    """``alpha . m(v_q)`` at every node, shape ``(..., n_q)``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[-1] != basis.size:
        raise ValueError(f"alpha has {alpha.shape[-1]} entries, basis has {basis.size}")
    z = np.einsum("...i,iq->...q", alpha, basis.eval_table)
    if guard:
        _check_exponent(z)
    return z


def _check_exponent(z):
    if not np.all(np.isfinite(z)):
        raise RangeError("non-finite exponent alpha . m")
    zmax = z.max() if z.size else -np.inf
    if zmax > EXPONENT_LIMIT:
        flat = int(np.argmax(z))
        idx = np.unravel_index(flat, z.shape)
        sample = idx[:-1] if z.ndim > 1 else None
        raise RangeError(
            f"alpha . m = {zmax:.4g} exceeds {EXPONENT_LIMIT} at node {idx[-1]}"
            + (f" of sample {sample}" if sample else ""),
            node=int(idx[-1]), sample=sample)


def reconstruct_density(alpha, basis: MomentBasis) -> np.ndarray:
    """Nodal values of the entropy ansatz ``f = exp(alpha . m)``."""
    return np.exp(exponent(alpha, basis))


def dual_objective(alpha, u, basis: MomentBasis):
    """``<exp(alpha . m)> - alpha . u`` (the negated dual, to be minimized)."""
    alpha = np.asarray(alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    f = reconstruct_density(alpha, basis)
    out = bracket(f, basis.rule) - np.einsum("...i,...i->...", alpha, u)
    return out if np.ndim(out) else float(out)


def dual_gradient(alpha, u, basis: MomentBasis) -> np.ndarray:
    """``<m exp(alpha . m)> - u``; vanishes at the dual optimum."""
    f = reconstruct_density(alpha, basis)
    return _moments(f, basis) - np.asarray(u, dtype=float)


def dual_hessian(alpha, basis: MomentBasis) -> np.ndarray:
    """``H_ij = sum_q w_q m_i m_j exp(alpha . m)``, shape ``(..., n, n)``."""
    f = reconstruct_density(alpha, basis)
    return _second_moments(f, basis)


def _moments(f, basis):
    return np.einsum("...q,iq->...i", f * basis.rule.weights, basis.eval_table)


def _second_moments(f, basis):
    m = basis.eval_table
    return np.einsum("...q,iq,jq->...ij", f * basis.rule.weights, m, m)


def entropy_functional(u, alpha, basis: MomentBasis):
    """Minimal entropy ``h = alpha . u - <exp(alpha . m)>`` for an optimal ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    f = reconstruct_density(alpha, basis)
    out = np.einsum("...i,...i->...", alpha, np.asarray(u, dtype=float)) - bracket(f, basis.rule)
    return out if np.ndim(out) else float(out)


def kinetic_entropy(alpha, basis: MomentBasis):
    """``<eta(f)>`` with ``f = exp(alpha . m)``, evaluated without taking logs.

    Uses ``eta(exp(z)) = (z - 1) exp(z)``. Agrees with :func:`entropy_functional`
    only when ``alpha`` is the optimizer for ``u``.
    """
    z = exponent(alpha, basis)
    out = bracket((z - 1.0) * np.exp(z), basis.rule)
    return out if np.ndim(out) else float(out)


def log_partition(alpha_r, basis: MomentBasis):
    """``ln <exp(alpha_r . m_r)>``, computed with a max shift."""
    alpha_r = np.asarray(alpha_r, dtype=float)
    if alpha_r.shape[-1] != basis.reduced_size:
        raise ValueError(
            f"reduced alpha has {alpha_r.shape[-1]} entries, expected {basis.reduced_size}")
    z = np.einsum("...i,iq->...q", alpha_r, basis.eval_table[1:])
    if not np.all(np.isfinite(z)):
        raise RangeError("non-finite reduced exponent")
    shift = z.max(axis=-1, keepdims=True)
    s = bracket(np.exp(z - shift), basis.rule)
    return np.log(s) + shift[..., 0]


def alpha_zero_from_reduced(alpha_r, basis: MomentBasis):
    """Multiplier of the constant basis function that gives unit mass."""
    out = -log_partition(alpha_r, basis)
    return out if np.ndim(out) else float(out)


def assemble_alpha(alpha_r, basis: MomentBasis) -> np.ndarray:
    """Full multipliers ``[alpha_0, alpha_r]`` for a normalized moment."""
    alpha_r = np.asarray(alpha_r, dtype=float)
    a0 = np.asarray(alpha_zero_from_reduced(alpha_r, basis))
    return np.concatenate([a0[..., None], alpha_r], axis=-1)


def normalized_moments_from_reduced(alpha_r, basis: MomentBasis) -> np.ndarray:
    """Moments of ``exp(alpha . m)`` with ``alpha_0`` chosen for unit mass.

    Evaluated as ``<m p>/<p>`` with ``p = exp(alpha_r . m_r - max)``, so
    extreme ``alpha_r`` do not overflow and the mass is one up to rounding.
    """
    alpha_r = np.asarray(alpha_r, dtype=float)
    z = np.einsum("...i,iq->...q", alpha_r, basis.eval_table[1:])
    p = np.exp(z - z.max(axis=-1, keepdims=True))
    mom = _moments(p, basis)
    return mom / mom[..., :1]


def rescale_alpha(alpha_normalized, u0):
    """Multipliers for ``u = u0 * u_bar`` from those of ``u_bar``."""
    u0 = np.asarray(u0, dtype=float)
    if np.any(u0 <= 0):
        raise DomainError("u0 must be positive")
    alpha = np.array(alpha_normalized, dtype=float, copy=True)
    alpha[..., 0] = alpha[..., 0] + np.log(u0)
    return alpha
