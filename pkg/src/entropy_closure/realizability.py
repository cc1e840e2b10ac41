"""Geometry of the normalized realizable set.

In 1D with monomials up to order 4 the reduced normalized moments
``(u1, ..., uN)`` are realizable iff the Kershaw chain holds::

    -1 <= u1 <= 1
    u1^2 <= u2 <= 1
    -u2 + (u1 + u2)^2 / (1 + u1) <= u3 <= u2 - (u1 - u2)^2 / (1 - u1)
    (u2^3 + u3^2 - 2 u1 u2 u3) / (u2 - u1^2) <= u4 <= u2 - (u1 - u3)^2 / (1 - u2)

(the order-4 row is the Hankel-determinant form). For 2D M1 the condition is
``|u_r| <= 1``. The *margin* of a point is the smallest slack over the active
inequalities; it is positive exactly in the interior and is used as the
distance to the boundary when filtering samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .quadrature import MomentBasis

_DENOM_EPS = 1e-14

KERSHAW_CONSTRAINTS = (
    "u1>=-1", "u1<=1",
    "u2>=u1^2", "u2<=1",
    "u3>=lower", "u3<=upper",
    "u4>=lower", "u4<=upper",
)


@dataclass(frozen=True)
class RealizabilityReport:
    realizable: bool
    margin: float
    binding_constraint: str


def normalize(u):
    """Split ``u`` into ``(u0, u_r / u0)``; works on batches along axis 0."""
    u = np.asarray(u, dtype=float)
    u0 = u[..., 0]
    if np.any(u0 <= 0):
        raise DomainError("normalization needs u0 > 0")
    ur = u[..., 1:] / u0[..., None]
    return (float(u0) if u0.ndim == 0 else u0), ur


def denormalize(u0, ur) -> np.ndarray:
    u0 = np.asarray(u0, dtype=float)
    ur = np.asarray(ur, dtype=float)
    return np.concatenate([u0[..., None], ur * u0[..., None]], axis=-1)


def _safe_div(num, den):
    ok = np.abs(den) > _DENOM_EPS
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0), ok


def kershaw_slacks(ur, order: int) -> np.ndarray:
    """Slack of every Kershaw inequality, shape ``(..., 2 * order)``.

    Where a denominator vanishes the point sits on the boundary of a lower
    order set; the affected slacks are set to zero instead of dividing.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError(f"Kershaw conditions are available for orders 1..4, got {order}")
    ur = np.asarray(ur, dtype=float)
    if ur.shape[-1] != order:
        raise ValueError(f"expected {order} reduced moments, got {ur.shape[-1]}")
    u1 = ur[..., 0]
    s = [u1 + 1.0, 1.0 - u1]
    if order >= 2:
        u2 = ur[..., 1]
        s += [u2 - u1**2, 1.0 - u2]
    if order >= 3:
        u3 = ur[..., 2]
        up, ok_up = _safe_div((u1 - u2) ** 2, 1.0 - u1)
        lo, ok_lo = _safe_div((u1 + u2) ** 2, 1.0 + u1)
        s += [np.where(ok_lo, u3 + u2 - lo, 0.0), np.where(ok_up, u2 - up - u3, 0.0)]
    if order >= 4:
        u4 = ur[..., 3]
        lo, ok_lo = _safe_div(u2**3 + u3**2 - 2.0 * u1 * u2 * u3, u2 - u1**2)
        up, ok_up = _safe_div((u1 - u3) ** 2, 1.0 - u2)
        s += [np.where(ok_lo, u4 - lo, 0.0), np.where(ok_up, u2 - up - u4, 0.0)]
    return np.stack(s, axis=-1)


def _report(slacks, names) -> RealizabilityReport:
    k = int(np.argmin(slacks))
    margin = float(slacks[k])
    return RealizabilityReport(margin > 0, margin, names[k])


def check_kershaw_1d(ur, order: int) -> RealizabilityReport:
    slacks = kershaw_slacks(np.asarray(ur, dtype=float).reshape(order), order)
    return _report(slacks, KERSHAW_CONSTRAINTS[: 2 * order])


def m1_margin(ur) -> np.ndarray:
    ur = np.asarray(ur, dtype=float)
    return 1.0 - np.sqrt(np.einsum("...i,...i->...", ur, ur))


def check_m1_norm(ur) -> RealizabilityReport:
    """Norm condition ``|u_r| <= 1`` for M1 in 1D or 2D."""
    margin = float(m1_margin(np.ravel(ur)))
    return RealizabilityReport(margin > 0, margin, "|u_r|<=1")


def margins(ur, basis: MomentBasis) -> np.ndarray:
    """Vectorized margin for the geometry that applies to ``basis``."""
    if basis.dimension == 1:
        return kershaw_slacks(ur, basis.order).min(axis=-1)
    if basis.order == 1:
        return m1_margin(ur)
    raise NotImplementedError("realizability is characterized for 1D N<=4 and 2D M1 only")


def check(ur, basis: MomentBasis) -> RealizabilityReport:
    if basis.dimension == 1:
        return check_kershaw_1d(ur, basis.order)
    if basis.order == 1:
        return check_m1_norm(ur)
    raise NotImplementedError("realizability is characterized for 1D N<=4 and 2D M1 only")


def boundary_distance(ur, basis: MomentBasis) -> float:
    """Margin of a realizable point; raises for points outside the set."""
    rep = check(ur, basis)
    if not rep.realizable:
        raise DomainError(
            f"moment {np.ravel(ur).tolist()} is not realizable "
            f"(margin {rep.margin:.3g}, binding {rep.binding_constraint})")
    return rep.margin


def bounding_box_1d(order: int) -> tuple[np.ndarray, np.ndarray]:
    # odd moments lie in [-1, 1], even ones in [0, 1]
    lo = np.array([-1.0 if k % 2 else 0.0 for k in range(1, order + 1)])
    return lo, np.ones(order)


def bounding_box(basis: MomentBasis) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box containing the reduced realizable set."""
    if basis.dimension == 1:
        return bounding_box_1d(basis.order)
    if basis.order == 1:
        return -np.ones(2), np.ones(2)
    raise NotImplementedError("no bounding box for this basis")
