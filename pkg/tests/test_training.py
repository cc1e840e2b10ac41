import numpy as np
import pytest

from entropy_closure.icnn import IcnnModel, loss
from entropy_closure.sampling import SamplerConfig, sample_uniform_moments
from entropy_closure.training import Adam, TrainConfig, TrainingDivergedError, default_layout, train


@pytest.fixture
def small(m1):
    return sample_uniform_moments(SamplerConfig(count=10, seed=11), m1)


def test_default_layouts():
    assert default_layout(1, 1) == (10, 7)
    assert default_layout(1, 2) == (15, 7)
    assert default_layout(2, 1) == (18, 8)


def test_adam_minimizes_a_quadratic():
    x = np.array([3.0, -2.0])
    opt = Adam(2, lr=0.1)
    for _ in range(500):
        opt.step(x, 2 * x)
    assert np.abs(x).max() < 1e-3


def test_overfits_ten_samples(m1):
    # interior draws; labels with |alpha| > 15 need more iterations than this budget
    small = sample_uniform_moments(SamplerConfig(count=10, seed=11, delta=0.1), m1)
    model = IcnnModel(1, 10, 7, seed=0)
    best, hist = train(model, small, m1, TrainConfig(epochs=5000, val_fraction=0.0))
    assert len(hist.val) <= 5000
    assert hist.val[hist.best_epoch]["total"] < 1e-6
    assert best.min_wz() >= 0.0


@pytest.mark.parametrize("optimizer", ["lbfgs", "adam"])
def test_training_is_reproducible(m1, small, optimizer):
    cfg = TrainConfig(epochs=20, batch_size=4, val_fraction=0.2, seed=3, optimizer=optimizer)
    a, _ = train(IcnnModel(1, 6, 2, seed=1), small, m1, cfg)
    b, _ = train(IcnnModel(1, 6, 2, seed=1), small, m1, cfg)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.min_wz() >= 0.0


@pytest.mark.parametrize("optimizer", ["lbfgs", "adam"])
def test_returns_best_validation_model(m1, small, optimizer):
    cfg = TrainConfig(epochs=30, batch_size=4, lr=5e-2, val_fraction=0.3, seed=2,
                      optimizer=optimizer)
    model = IcnnModel(1, 6, 2, seed=1)
    best, hist = train(model, small, m1, cfg)
    vals = [v["total"] for v in hist.val]
    assert hist.best_epoch == int(np.argmin(vals))
    assert best.meta["best_val_loss"] == pytest.approx(min(vals))
    np.testing.assert_array_equal(model.theta, best.theta)
    assert best.meta["order"] == 1 and best.meta["quadrature"] == m1.rule.label


def test_plateau_halves_learning_rate(m1, small):
    cfg = TrainConfig(epochs=60, batch_size=10, lr=1e-1, patience=2, val_fraction=0.3,
                      optimizer="adam", min_lr=1e-4)
    _, hist = train(IcnnModel(1, 4, 1), small, m1, cfg)
    assert min(hist.lr) < 1e-1
    for a, b in zip(hist.lr, hist.lr[1:]):
        assert b == a or b == pytest.approx(a / 2) or b == cfg.min_lr


@pytest.mark.parametrize("optimizer", ["lbfgs", "adam"])
def test_divergence_raises_with_last_good_model(m1, small, optimizer):
    bad = small[np.arange(len(small))]
    bad.h[3] = np.nan
    cfg = TrainConfig(epochs=10, batch_size=10, val_fraction=0.0, optimizer=optimizer)
    with pytest.raises(TrainingDivergedError) as info:
        train(IcnnModel(1, 4, 1), bad, m1, cfg)
    assert info.value.model is not None


def test_rejects_bad_config():
    with pytest.raises(ValueError):
        TrainConfig(alpha_mode="nope")
    with pytest.raises(ValueError):
        TrainConfig(schedule="nope")
    with pytest.raises(ValueError):
        TrainConfig(optimizer="nope")
