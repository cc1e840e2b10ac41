import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropy_closure.errors import DomainError
from entropy_closure.quadrature import MomentBasis, build_gauss_legendre
from entropy_closure.realizability import (
    bounding_box, boundary_distance, check, check_kershaw_1d, check_m1_norm, denormalize,
    kershaw_slacks, margins, normalize,
)


def _discrete_moments(rng, order, atoms):
    x = rng.uniform(-1, 1, atoms)
    w = rng.dirichlet(np.ones(atoms))
    return np.array([np.sum(w * x**k) for k in range(1, order + 1)])


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_random_measures_satisfy_kershaw(order):
    # any probability measure on [-1, 1] has realizable moments (oracle: construction)
    rng = np.random.default_rng(order)
    for _ in range(2000):
        ur = _discrete_moments(rng, order, rng.integers(order + 1, 12))
        assert kershaw_slacks(ur, order).min() >= -1e-12


def test_uniform_density_is_interior():
    for order in (1, 2, 3, 4):
        ur = np.array([0.0 if k % 2 else 1.0 / (k + 1) for k in range(1, order + 1)])
        assert check_kershaw_1d(ur, order).realizable


def test_known_violations():
    rep = check_kershaw_1d([0.5, 0.2], 2)
    assert not rep.realizable and rep.binding_constraint == "u2>=u1^2"
    assert not check_kershaw_1d([1.5], 1).realizable
    assert not check_kershaw_1d([0.0, 0.5, 0.9], 3).realizable


def test_two_atom_measures_lie_on_order_four_boundary():
    # two atoms saturate the order-4 lower bound (Hankel determinant vanishes)
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = rng.uniform(-0.9, 0.9, 2)
        w = rng.dirichlet([1, 1])
        ur = np.array([np.sum(w * x**k) for k in range(1, 5)])
        assert abs(kershaw_slacks(ur, 4)[6]) < 1e-10


def test_m1_norm():
    assert check_m1_norm([0.3, 0.3]).margin == pytest.approx(1 - np.hypot(0.3, 0.3))
    assert not check_m1_norm([0.8, 0.8]).realizable


def test_margins_dispatch(m1, m2d):
    np.testing.assert_allclose(margins(np.array([[0.5], [-0.9]]), m1), [0.5, 0.1])
    assert margins(np.array([0.3, 0.4]), m2d) == pytest.approx(0.5)
    with pytest.raises(NotImplementedError):
        margins(np.zeros(5), MomentBasis(2, m2d.rule))


def test_normalize_round_trip():
    u = np.array([[2.0, 0.4, 1.0], [0.5, 0.1, 0.2]])
    u0, ur = normalize(u)
    np.testing.assert_allclose(denormalize(u0, ur), u)
    with pytest.raises(DomainError):
        normalize([0.0, 0.1])


def test_boundary_distance(m2):
    assert boundary_distance([0.0, 0.5], m2) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        boundary_distance([0.0, 1.5], m2)


def test_bounding_box_contains_realizable_points():
    b = MomentBasis(4, build_gauss_legendre(8))
    lo, hi = bounding_box(b)
    rng = np.random.default_rng(3)
    for _ in range(500):
        ur = _discrete_moments(rng, 4, 5)
        assert np.all(ur >= lo) and np.all(ur <= hi)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(0.0, 1.0))
def test_check_agrees_with_slacks(u1, t):
    u2 = u1**2 + t * (1 - u1**2)
    b = MomentBasis(2, build_gauss_legendre(4))
    assert check([u1, u2], b).margin == pytest.approx(kershaw_slacks(np.array([u1, u2]), 2).min())
