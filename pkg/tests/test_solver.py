import numpy as np
import pytest

from entropy_closure.entropy import reconstruct_density
from entropy_closure.errors import RealizabilityError
from entropy_closure.realizability import margins
from entropy_closure.solver import (
    KineticSolver, NewtonBackend, case_defaults, collision_moments, collision_moments_nodal,
    read_fields, run_case, step_count, timestep_size, upwind_flux, write_diagnostics,
    write_fields,
)


def test_flux_consistency(m2):
    # equal states on both sides: the flux is <mu m f>
    mu = m2.rule.nodes.ravel()
    f = np.exp(0.3 * mu)
    exact = m2.eval_table @ (m2.rule.weights * mu * f)
    np.testing.assert_allclose(upwind_flux(f, f, [1.0], m2), exact, atol=1e-14)


def test_half_range_flux(m2):
    # half-range integrals under a full-range rule are approximate (kink at mu = 0)
    q = m2.rule.n_q
    mu = m2.rule.nodes.ravel()
    got = upwind_flux(np.full(q, 0.5), np.zeros(q), [1.0], m2)
    np.testing.assert_allclose(got, 0.5 * m2.eval_table @ (m2.rule.weights * np.maximum(mu, 0)),
                               atol=1e-15)
    np.testing.assert_allclose(got, [1 / 4, 1 / 6, 1 / 8], rtol=2e-3)


def test_flux_antisymmetry(m2d):
    rng = np.random.default_rng(0)
    fa, fb = rng.uniform(0.1, 2, (2, m2d.rule.n_q))
    for n in ([1.0, 0.0], [0.0, 1.0]):
        np.testing.assert_allclose(upwind_flux(fa, fb, n, m2d),
                                   -upwind_flux(fb, fa, -np.array(n), m2d), atol=1e-14)


def test_collision_closed_form(m1, m2):
    np.testing.assert_allclose(collision_moments(np.array([1.0, 0.4]), 1.0, m1), [0.0, -0.4])
    np.testing.assert_allclose(collision_moments(np.array([2.0, 0.4, 1.0]), 0.5, m2),
                               [0.0, -0.2, 0.5 * (2 / 3 - 1.0)])


def test_collision_nodal_matches_closed_form(m2):
    alpha = np.array([[0.1, 0.7, -0.4], [-1.0, 2.0, 1.0]])
    f = reconstruct_density(alpha, m2)
    u = np.einsum("bq,iq->bi", f * m2.rule.weights, m2.eval_table)
    np.testing.assert_allclose(collision_moments_nodal(f, 1.3, m2),
                               collision_moments(u, 1.3, m2), atol=1e-13)


def test_collision_conserves_mass_and_vanishes_at_isotropy(m2):
    iso = np.full(m2.rule.n_q, 0.7)
    np.testing.assert_allclose(collision_moments_nodal(iso, 2.0, m2), 0.0, atol=1e-15)
    f = np.random.default_rng(1).uniform(0.1, 1, m2.rule.n_q)
    assert collision_moments_nodal(f, 2.0, m2)[0] == 0.0


def test_step_counts():
    for case, n in (("inflow-1d-m1", 1399), ("inflow-1d-m2", 1399), ("periodic-2d-m1", 1226)):
        cfg = case_defaults(case)
        assert step_count(cfg, cfg.mesh()) == n


def test_cfl_halving_doubles_steps():
    a = case_defaults("inflow-1d-m1")
    b = case_defaults("inflow-1d-m1", cfl=0.025)
    assert timestep_size(b, b.mesh()) == pytest.approx(timestep_size(a, a.mesh()) / 2)
    assert abs(step_count(b, b.mesh()) - 2 * step_count(a, a.mesh())) <= 2


def test_floor_state_is_a_fixed_point_without_inflow():
    cfg = case_defaults("inflow-1d-m1", inflow=1e-6, n_x=20)
    res = run_case(cfg, steps=20)
    u0 = res.final.u[:, 0]
    np.testing.assert_allclose(u0, 2e-6, rtol=1e-10)


def test_inflow_profile_is_monotone():
    cfg = case_defaults("inflow-1d-m2", n_x=40, T=0.3)
    res = run_case(cfg)
    u0 = res.final.u[:, 0]
    assert np.all(np.diff(u0) <= 1e-12)
    assert u0[0] > 0.1 and res.final.t == pytest.approx(0.3)


def test_periodic_mass_is_conserved():
    cfg = case_defaults("periodic-2d-m1", n_x=12, n_v=100)
    res = run_case(cfg, steps=10)
    masses = [d["mass"] for d in res.diagnostics]
    assert max(abs(m - masses[0]) for m in masses) <= 1e-12 * masses[0]
    ent = np.array([d["entropy"] for d in res.diagnostics])
    assert np.all(np.diff(ent) <= 1e-12)


def test_periodic_initial_margin():
    cfg = case_defaults("periodic-2d-m1", n_x=12, n_v=100)
    solver = KineticSolver(cfg, NewtonBackend(cfg.basis()))
    st = solver.initial_state()
    ur = st.u[..., 1:] / st.u[..., :1]
    np.testing.assert_allclose(margins(ur.reshape(-1, 2), cfg.basis()), 1 - 0.3 * np.sqrt(2),
                               atol=1e-3)


def test_realizability_violation_is_reported():
    cfg = case_defaults("inflow-1d-m1", n_x=5)
    solver = KineticSolver(cfg, NewtonBackend(cfg.basis()))
    st = solver.initial_state()
    st.u[3] = [1.0, 1.5]
    with pytest.raises(RealizabilityError) as info:
        solver.check_realizable(st)
    assert info.value.cell == 3


def test_output_files(tmp_path):
    cfg = case_defaults("inflow-1d-m1", n_x=10, T=0.05)
    res = run_case(cfg)
    write_diagnostics(res.diagnostics, tmp_path / "d.csv")
    write_fields(res.final, cfg.mesh(), tmp_path / "f.csv")
    cols, table = read_fields(tmp_path / "f.csv")
    assert cols == ["x", "u0", "u1"]
    np.testing.assert_array_equal(table[:, 1:], res.final.u)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "step,t,mass,entropy"
