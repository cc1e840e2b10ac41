import numpy as np
import pytest

from entropy_closure.icnn import IcnnModel
from entropy_closure.metrics import accuracy, benchmark, format_timings, population
from entropy_closure.realizability import margins
from entropy_closure.sampling import SamplerConfig, sample_uniform_moments


def test_populations(m2):
    b = population("boundary", 200, m2, seed=1)
    i = population("interior", 200, m2, seed=1)
    np.testing.assert_array_equal(b[:, 0], 1.0)
    mb, mi = margins(b[:, 1:], m2), margins(i[:, 1:], m2)
    assert np.all((mb > 0.009) & (mb < 0.011))
    assert mi.min() > 0.1
    with pytest.raises(ValueError):
        population("elsewhere", 5, m2)


def test_accuracy_keys_and_zero_error_on_labels(m1):
    ds = sample_uniform_moments(SamplerConfig(count=20, seed=0), m1)
    acc = accuracy(IcnnModel(1, 4, 1), ds, m1)
    assert set(acc) == {f"{a}_{q}" for a in ("mse", "mae") for q in ("h", "alpha", "u")}
    assert all(v >= 0 for v in acc.values())


def test_benchmark_rows(m1):
    rows = benchmark(m1, IcnnModel(1, 4, 1), batches=(20,), repeats=2,
                     populations=("interior",))
    assert [(r.backend, r.population) for r in rows] == [("newton", "interior"),
                                                          ("icnn", "interior")]
    assert all(r.per_sample == r.mean / 20 for r in rows)
    assert "per sample" in format_timings(rows)
    with pytest.raises(ValueError):
        benchmark(m1, None, repeats=1)
