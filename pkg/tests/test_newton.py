import math

import numpy as np
import pytest

from entropy_closure.entropy import assemble_alpha, dual_gradient, normalized_moments_from_reduced
from entropy_closure.errors import BoundaryProximityError, DomainError
from entropy_closure.newton import NewtonConfig, newton_batch, solve_dual, solve_dual_batch


def test_isotropic_anchors(m1):
    r = solve_dual(np.array([1.0, 0.0]), m1)
    assert r.converged and r.failure is None
    np.testing.assert_allclose(r.alpha, [-math.log(2), 0.0], atol=1e-9)
    assert r.h == pytest.approx(-math.log(2) - 1, abs=1e-9)
    r = solve_dual(np.array([2.0, 0.0]), m1)
    np.testing.assert_allclose(r.alpha, [0.0, 0.0], atol=1e-9)
    assert r.h == pytest.approx(-2.0, abs=1e-9)


def test_recovers_known_multipliers(m2, rng):
    ar = rng.uniform(-5, 5, size=(50, 2))
    alpha = assemble_alpha(ar, m2)
    u = normalized_moments_from_reduced(ar, m2)
    res = newton_batch(u, m2, NewtonConfig(tolerance=1e-12))
    assert res.converged.all()
    np.testing.assert_allclose(res.alpha, alpha, atol=1e-7)


def test_gradient_below_tolerance(m2):
    u = np.array([1.0, 0.3, 0.4])
    r = solve_dual(u, m2, NewtonConfig(tolerance=1e-10))
    assert np.abs(dual_gradient(r.alpha, u, m2)).max() <= 1e-10
    assert r.final_gradient_norm <= 1e-10


def test_objective_decreases_monotonically(m2):
    res = newton_batch(np.array([[1.0, 0.8, 0.7]]), m2, record_objective=True)
    trace = res.objective_trace[0]
    assert len(trace) > 2
    assert all(b <= a + 1e-14 for a, b in zip(trace, trace[1:]))


def test_iterations_grow_towards_boundary(m1):
    near = solve_dual(np.array([1.0, 0.9]), m1)
    far = solve_dual(np.array([1.0, 0.1]), m1)
    assert near.iterations > far.iterations


def test_failures_are_isolated_per_element(m1):
    us = np.array([[1.0, 0.2], [1.0, 0.9999999999], [1.0, -0.3]])
    res = newton_batch(us, m1, NewtonConfig(max_iterations=15))
    assert res.converged[0] and res.converged[2]
    assert not res.converged[1]
    assert res.failure[1] in ("max_iterations", "singular_hessian", "line_search")
    single = [solve_dual(u, m1) for u in us[[0, 2]]]
    np.testing.assert_array_equal(res.alpha[0], single[0].alpha)
    np.testing.assert_array_equal(res.alpha[2], single[1].alpha)


def test_batch_result_is_independent_of_batch_composition(m2, rng):
    ar = rng.uniform(-3, 3, size=(30, 2))
    u = normalized_moments_from_reduced(ar, m2)
    whole = newton_batch(u, m2)
    part = newton_batch(u[7:9], m2)
    np.testing.assert_array_equal(whole.alpha[7:9], part.alpha)


def test_point_mass_moment_is_not_closed(m1):
    # exactly on the boundary a point mass has no entropy closure
    try:
        r = solve_dual(np.array([1.0, 1.0]), m1, NewtonConfig(max_iterations=500))
    except BoundaryProximityError:
        return
    assert not r.converged
    assert r.failure in ("max_iterations", "line_search")


def test_warm_start_saves_iterations(m2):
    u = np.array([1.0, 0.5, 0.5])
    cold = solve_dual(u, m2)
    warm = solve_dual(u * (1 + 1e-4), m2, warm_start=cold.alpha)
    assert warm.iterations < cold.iterations


def test_input_validation(m1):
    with pytest.raises(DomainError):
        solve_dual(np.array([0.0, 0.0]), m1)
    with pytest.raises(ValueError):
        solve_dual(np.array([1.0, 0.0, 0.0]), m1)
    with pytest.raises(ValueError):
        NewtonConfig(tolerance=0)


def test_batch_list_matches_arrays(m1):
    out = solve_dual_batch(np.array([[1.0, 0.0], [2.0, 0.0]]), m1)
    assert len(out) == 2 and out[1].h == pytest.approx(-2.0)
