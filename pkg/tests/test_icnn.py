import json

import numpy as np
import pytest

from entropy_closure.entropy import assemble_alpha, entropy_functional, normalized_moments_from_reduced
from entropy_closure.errors import DomainError, ModelFormatError
from entropy_closure.icnn import (
    IcnnModel, LossWeights, infer_normalized, infer_scaled, load_model, loss, save_model,
)
from entropy_closure.quadrature import MomentBasis, build_gauss_legendre
from entropy_closure.sampling import Dataset, SamplerConfig, sample_uniform_moments


def _random_wz(model, seed=0):
    # push the weights away from the tiny initial scale so convexity is not trivial
    rng = np.random.default_rng(seed)
    model.theta[:] = rng.normal(size=model.theta.size)
    model.project()
    return model


def test_layer_layout():
    m = IcnnModel(1, 10, 7)
    assert m.layout == "10x7"
    assert m.sizes == [10] * 8 + [5, 1]
    assert "layer0.Wz" not in m.params
    assert m.params["layer8.Wz"].shape == (5, 10)
    assert m.params["layer9.Wz"].shape == (1, 5)


def test_midpoint_convexity():
    m = _random_wz(IcnnModel(2, 8, 3), 1)
    rng = np.random.default_rng(2)
    a, b = rng.uniform(-1, 1, (2, 1000, 2))
    mid = m.forward((a + b) / 2)
    assert np.all(mid <= 0.5 * (m.forward(a) + m.forward(b)) + 1e-12)


def test_projection_makes_wz_nonnegative():
    m = IcnnModel(1, 6, 2)
    m.theta[:] = -1.0
    m.project()
    assert m.min_wz() == 0.0
    assert m.params["layer0.Wx"].min() == -1.0


def test_input_gradient_matches_finite_differences():
    m = _random_wz(IcnnModel(2, 6, 3), 3)
    x = np.random.default_rng(4).uniform(-1, 1, (20, 2))
    g = m.input_gradient(x)
    e = 1e-6
    for k in range(2):
        d = np.zeros(2)
        d[k] = e
        fd = (m.forward(x + d) - m.forward(x - d)) / (2 * e)
        np.testing.assert_allclose(g[:, k], fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("mode", ["full", "reduced"])
def test_loss_gradient_matches_finite_differences(m2, mode):
    ds = sample_uniform_moments(SamplerConfig(order=2, count=12, seed=5), m2)
    m = IcnnModel(2, 5, 2, seed=6)
    w = LossWeights(1.0, 0.5, 2.0)
    total, terms, grad = loss(m, ds, m2, w, mode, with_grad=True)
    assert total == pytest.approx(terms["h"] + 0.5 * terms["alpha"] + 2.0 * terms["u"])
    rng = np.random.default_rng(7)
    for k in rng.choice(m.theta.size, 25, replace=False):
        old = m.theta[k]
        e = 1e-6 * max(1.0, abs(old))
        m.theta[k] = old + e
        up = loss(m, ds, m2, w, mode)[0]
        m.theta[k] = old - e
        down = loss(m, ds, m2, w, mode)[0]
        m.theta[k] = old
        assert grad[k] == pytest.approx((up - down) / (2 * e), rel=1e-4, abs=1e-6)


def test_inference_mass_is_one(m2):
    m = _random_wz(IcnnModel(2, 6, 2), 8)
    x = np.random.default_rng(9).uniform(-0.5, 0.5, (100, 2))
    res = infer_normalized(m, x, m2)
    np.testing.assert_allclose(res.u[:, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(res.alpha, assemble_alpha(res.alpha[:, 1:], m2), atol=1e-12)


def test_scaled_inference_shifts_alpha0(m1):
    m = IcnnModel(1, 4, 1, seed=2)
    a = infer_normalized(m, np.array([0.3]), m1).alpha
    b = infer_scaled(m, np.array([2.5, 0.75]), m1).alpha
    np.testing.assert_allclose(b, a + [np.log(2.5), 0.0], atol=1e-14)
    with pytest.raises(DomainError):
        infer_scaled(m, np.array([0.0, 0.0]), m1)


def test_save_load_round_trip(tmp_path):
    m = _random_wz(IcnnModel(2, 6, 3, meta={"order": 2}), 10)
    save_model(m, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(again.theta, m.theta)
    assert again.layout == "6x3" and again.meta["order"] == 2
    x = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    np.testing.assert_array_equal(again.forward(x), m.forward(x))


def test_load_errors(tmp_path, m1):
    m = IcnnModel(2, 4, 1)
    save_model(m, tmp_path / "m.json")
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "m.json", m1)
    d = json.loads((tmp_path / "m.json").read_text())
    (tmp_path / "v.json").write_text(json.dumps({**d, "version": 99}))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(tmp_path / "v.json")
    (tmp_path / "magic.json").write_text(json.dumps({**d, "format": "other"}))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "magic.json")
    raw = (tmp_path / "m.json").read_text()
    (tmp_path / "cut.json").write_text(raw[: len(raw) // 2])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "cut.json")
    d["params"]["layer1.Wz"]["data"] = d["params"]["layer1.Wz"]["data"][:-1]
    (tmp_path / "short.json").write_text(json.dumps(d))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "short.json")


def test_loss_rejects_empty_batch(m1):
    empty = Dataset(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        loss(IcnnModel(1, 4, 1), empty, m1)


def test_softplus_sigmoid_matches_reference():
    from scipy.special import expit
    from entropy_closure.icnn import softplus_sigmoid
    a = np.concatenate([np.linspace(-745, 745, 20001), [-1e-300, 0.0, 39.99, 40.0, 40.01]])
    sp, sig = softplus_sigmoid(a)
    ref = np.logaddexp(0.0, a)
    assert np.all(np.abs(sp - ref) <= 4e-16 * np.maximum(ref, 1e-300))
    np.testing.assert_allclose(sig, expit(a), rtol=4e-16, atol=1e-300)
