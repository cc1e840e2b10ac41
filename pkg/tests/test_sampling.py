import hashlib

import numpy as np
import pytest

from entropy_closure.entropy import dual_gradient, entropy_functional
from entropy_closure.errors import DatasetFormatError, SamplingError
from entropy_closure.quadrature import MomentBasis, build_gauss_legendre, build_projected_sphere
from entropy_closure.realizability import margins
from entropy_closure.sampling import (
    SamplerConfig, dataset_basis, draw_realizable, label_from_alpha, read_dataset,
    sample_uniform_alpha, sample_uniform_moments, write_dataset,
)


def _check_labels(ds, basis, grad_tol):
    # the triplet relations: grad of the dual vanishes and h = alpha . u - <exp(alpha . m)>
    g = dual_gradient(ds.alpha, ds.u, basis)
    assert np.abs(g).max() <= grad_tol
    np.testing.assert_allclose(entropy_functional(ds.u, ds.alpha, basis), ds.h, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_uniform_moments_are_realizable_and_labelled(order):
    basis = MomentBasis(order, build_gauss_legendre(28))
    ds = sample_uniform_moments(SamplerConfig(order=order, count=200, seed=order), basis)
    assert len(ds) == 200
    assert margins(ds.ur, basis).min() > 0.01
    np.testing.assert_array_equal(ds.u[:, 0], 1.0)
    _check_labels(ds, basis, 1e-8)


def test_uniform_alpha_labels_are_exact(m2):
    ds = sample_uniform_alpha(SamplerConfig(order=2, count=300, box=(-10, 10), seed=3), m2)
    assert len(ds) == 300
    np.testing.assert_allclose(ds.u[:, 0], 1.0, atol=1e-12)
    _check_labels(ds, m2, 1e-12)


def test_alpha_sampler_reaches_the_boundary_more_often(m1):
    a = sample_uniform_moments(SamplerConfig(count=3000, seed=0), m1)
    b = sample_uniform_alpha(SamplerConfig(count=3000, box=(-50, 50), seed=0), m1)
    near_a = np.mean(margins(a.ur, m1) < 0.05)
    near_b = np.mean(margins(b.ur, m1) < 0.05)
    assert near_b > 2 * near_a


def test_2d_alpha_sampler_clusters_near_boundary(m2d):
    ds = sample_uniform_alpha(SamplerConfig(dimension=2, count=500, seed=1), m2d)
    assert np.median(margins(ds.ur, m2d)) < 0.05


def test_same_seed_same_bytes(m1, tmp_path):
    paths = []
    for k in range(2):
        ds = sample_uniform_moments(SamplerConfig(count=1000, seed=7), m1)
        paths.append(tmp_path / f"d{k}.csv")
        write_dataset(ds, paths[-1])
    digests = {hashlib.sha256(p.read_bytes()).hexdigest() for p in paths}
    assert len(digests) == 1


def test_dataset_round_trip(m2, tmp_path):
    ds = sample_uniform_moments(SamplerConfig(order=2, count=50, seed=2), m2)
    write_dataset(ds, tmp_path / "d.csv")
    again = read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(again.u, ds.u)
    np.testing.assert_array_equal(again.alpha, ds.alpha)
    np.testing.assert_array_equal(again.h, ds.h)
    assert dataset_basis(again).order == 2
    header = [ln for ln in (tmp_path / "d.csv").read_text().splitlines() if not ln.startswith("#")][0]
    assert header == "u1,u2,alpha0,alpha1,alpha2,h"


def test_2d_columns(m2d, tmp_path):
    ds = sample_uniform_alpha(SamplerConfig(dimension=2, count=5, seed=1), m2d)
    write_dataset(ds, tmp_path / "d.csv")
    assert read_dataset(tmp_path / "d.csv").u.shape == (5, 3)


def test_read_errors(tmp_path, m1):
    empty = tmp_path / "empty.csv"
    ds = sample_uniform_moments(SamplerConfig(count=3, seed=0), m1)
    write_dataset(ds, empty)
    text = empty.read_text().splitlines()
    empty.write_text("\n".join(ln for ln in text if ln.startswith("#") or ln.startswith("u1")) + "\n")
    with pytest.raises(DatasetFormatError):
        read_dataset(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(text[:-1] + ["0.1,abc,0.3"]) + "\n")
    with pytest.raises(DatasetFormatError, match="line"):
        read_dataset(bad)
    write_dataset(ds, tmp_path / "ok.csv")
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "ok.csv", order=2)


def test_label_from_alpha_mass(m1):
    ds = label_from_alpha(np.array([[3.0], [-7.0]]), m1)
    assert ds.meta["mass_error"] < 1e-13


def test_impossible_region_aborts():
    basis = MomentBasis(1, build_gauss_legendre(8))
    with pytest.raises(SamplingError):
        draw_realizable(np.random.default_rng(0), 1000, basis, 0.9995)


def test_split_partitions(m1):
    ds = sample_uniform_moments(SamplerConfig(count=100, seed=0), m1)
    tr, va = ds.split(0.2, seed=1)
    assert len(tr) == 80 and len(va) == 20
    both = np.sort(np.concatenate([tr.u[:, 1], va.u[:, 1]]))
    np.testing.assert_array_equal(both, np.sort(ds.u[:, 1]))


def test_uniform_moments_are_uniform_on_the_shrunk_interval(m1):
    from scipy.stats import chisquare
    ds = sample_uniform_moments(SamplerConfig(count=10_000, seed=4), m1)
    counts, _ = np.histogram(ds.u[:, 1], bins=10, range=(-0.99, 0.99))
    assert chisquare(counts).pvalue > 0.01
