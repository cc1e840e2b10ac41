"""Training data for the neural closure.

Two generators produce triplets ``(u_bar, alpha, h)`` of a normalized moment,
its full Lagrange multipliers and the minimal entropy:

* :func:`sample_uniform_moments` draws ``u_bar`` uniformly from the reduced
  realizable set (shrunk by a boundary standoff ``delta``) and labels it with
  the Newton solver.
* :func:`sample_uniform_alpha` draws the reduced multipliers uniformly from a
  box and obtains ``u_bar`` by quadrature, so no optimization is needed.

Datasets are stored as CSV with ``#`` metadata lines; see :func:`write_dataset`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .entropy import (assemble_alpha, entropy_functional, reconstruct_density)
from .errors import DatasetFormatError, RangeError, SamplingError
from .newton import NewtonConfig, newton_batch
from .quadrature import MomentBasis, moments_of, rule_from_label
from .realizability import bounding_box, bounding_box_1d, kershaw_slacks, margins

log = logging.getLogger(__name__)

FORMAT_TAG = "entropy-closure dataset v1"
ACCEPTANCE_WINDOW = 100_000
MIN_ACCEPTANCE = 0.01


@dataclass(frozen=True)
class ClosureSample:
    u: np.ndarray
    alpha: np.ndarray
    h: float


@dataclass
class SamplerConfig:
    order: int = 1
    dimension: int = 1
    count: int = 1000
    delta: float = 0.01
    tau: float = 1e-8
    box: tuple = (-50.0, 50.0)
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be positive")


@dataclass
class Dataset:
    """Stacked samples: ``u`` and ``alpha`` are ``(B, n)``, ``h`` is ``(B,)``."""

    u: np.ndarray
    alpha: np.ndarray
    h: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.h)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return ClosureSample(self.u[i], self.alpha[i], float(self.h[i]))
        return Dataset(self.u[i], self.alpha[i], self.h[i], dict(self.meta))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def ur(self) -> np.ndarray:
        return self.u[:, 1:]

    def split(self, fraction: float, seed: int = 0):
        """Random ``(train, validation)`` split; ``fraction`` goes to validation."""
        idx = np.random.default_rng(seed).permutation(len(self))
        n_val = int(round(fraction * len(self)))
        return self[np.sort(idx[n_val:])], self[np.sort(idx[:n_val])]


def _label(ur, alpha, basis) -> Dataset:
    u = np.concatenate([np.ones((len(ur), 1)), ur], axis=1)
    h = np.atleast_1d(entropy_functional(u, alpha, basis))
    return Dataset(u, alpha, h)


def _propose_1d(rng, n, order):
    """Uniform proposals on the 1D realizable set.

    Orders 1-2 use the bounding box. Orders 3-4 draw ``u3`` (and ``u4``)
    uniformly inside their conditional Kershaw interval and accept with
    probability proportional to the interval lengths; the accepted points are
    exactly uniform because the lengths are bounded by 1/2 and 1/4.
    """
    lo, hi = bounding_box_1d(order)
    if order <= 2:
        return rng.uniform(lo, hi, size=(n, order))
    u12 = rng.uniform(lo[:2], hi[:2], size=(n, 2))
    u12 = u12[kershaw_slacks(u12, 2).min(axis=1) > 0]
    u1, u2 = u12[:, 0], u12[:, 1]
    lo3 = -u2 + (u1 + u2) ** 2 / (1 + u1)
    hi3 = u2 - (u1 - u2) ** 2 / (1 - u1)
    u3 = lo3 + (hi3 - lo3) * rng.uniform(size=len(u1))
    weight = (hi3 - lo3) / 0.5
    cols = [u1, u2, u3]
    if order == 4:
        lo4 = (u2**3 + u3**2 - 2 * u1 * u2 * u3) / (u2 - u1**2)
        hi4 = u2 - (u1 - u3) ** 2 / (1 - u2)
        cols.append(lo4 + (hi4 - lo4) * rng.uniform(size=len(u1)))
        weight = weight * (hi4 - lo4) / 0.25
    keep = rng.uniform(size=len(u1)) < weight
    return np.stack(cols, axis=1)[keep]


def draw_realizable(rng, n, basis: MomentBasis, delta: float) -> tuple[np.ndarray, int]:
    """``n`` points uniform on ``{margin > delta}``; returns (points, draws used)."""
    out, have, draws, window_draws, window_acc = [], 0, 0, 0, 0
    while have < n:
        chunk = max(1024, 2 * (n - have))
        if basis.dimension == 1:
            cand = _propose_1d(rng, chunk, basis.order)
        else:
            lo, hi = bounding_box(basis)
            cand = rng.uniform(lo, hi, size=(chunk, len(lo)))
        draws += chunk
        window_draws += chunk
        ok = cand[margins(cand, basis) > delta]
        window_acc += len(ok)
        out.append(ok)
        have += len(ok)
        if window_draws >= ACCEPTANCE_WINDOW:
            rate = window_acc / window_draws
            if rate < MIN_ACCEPTANCE:
                raise SamplingError(
                    f"acceptance rate {rate:.2%} over {window_draws} draws for "
                    f"{basis.describe()} with delta={delta}; region mis-specified?")
            window_draws = window_acc = 0
    return np.concatenate(out)[:n], draws


def sample_uniform_moments(cfg: SamplerConfig, basis: MomentBasis,
                           newton: NewtonConfig | None = None) -> Dataset:
    """Uniform samples of the shrunk realizable set, labelled by Newton."""
    if not cfg.delta > 0:
        raise ValueError("uniform moment sampling needs delta > 0")
    newton = newton or NewtonConfig(tolerance=cfg.tau)
    rng = np.random.default_rng(cfg.seed)
    parts, have, draws, discarded = [], 0, 0, 0
    while have < cfg.count:
        ur, used = draw_realizable(rng, cfg.count - have, basis, cfg.delta)
        draws += used
        u = np.concatenate([np.ones((len(ur), 1)), ur], axis=1)
        res = newton_batch(u, basis, newton)
        ok = res.converged
        if not ok.all():
            discarded += int((~ok).sum())
            log.warning("discarded %d samples where Newton did not converge", (~ok).sum())
        parts.append(Dataset(u[ok], res.alpha[ok], res.h[ok]))
        have += int(ok.sum())
    ds = _concat(parts)
    ds.meta.update(_meta(cfg, basis, "uniform-u"), draws=draws, discarded=discarded,
                   acceptance=cfg.count / draws if draws else 1.0)
    return ds


def label_from_alpha(alpha_r, basis: MomentBasis) -> Dataset:
    """Triplets for given reduced multipliers (the inner step of the alpha sampler)."""
    alpha_r = np.atleast_2d(np.asarray(alpha_r, dtype=float))
    alpha = assemble_alpha(alpha_r, basis)
    u = moments_of(reconstruct_density(alpha, basis), basis)
    ds = _label(u[:, 1:], alpha, basis)
    ds.meta["mass_error"] = float(np.abs(u[:, 0] - 1.0).max()) if len(u) else 0.0
    return ds


def sample_uniform_alpha(cfg: SamplerConfig, basis: MomentBasis) -> Dataset:
    """Reduced multipliers uniform in the box ``A``, moments by quadrature."""
    lo, hi = _box_bounds(cfg.box, basis.reduced_size)
    rng = np.random.default_rng(cfg.seed)
    parts, have, discarded = [], 0, 0
    while have < cfg.count:
        n = cfg.count - have
        ar = rng.uniform(lo, hi, size=(n, basis.reduced_size))
        try:
            ds = label_from_alpha(ar, basis)
        except RangeError:
            ds = _label_rowwise(ar, basis)
        # points that quadrature pushes onto the boundary carry no information
        ok = margins(ds.ur, basis) > 0
        if not ok.all():
            discarded += int((~ok).sum())
            log.warning("discarded %d boundary samples from the alpha sampler", (~ok).sum())
        parts.append(ds[ok])
        have += int(ok.sum())
    ds = _concat(parts)
    ds.meta.update(_meta(cfg, basis, "uniform-alpha"), discarded=discarded)
    return ds


def _label_rowwise(ar, basis):
    keep = []
    for k, row in enumerate(ar):
        try:
            label_from_alpha(row, basis)
            keep.append(k)
        except RangeError:
            log.warning("alpha_r=%s overflows; sample discarded", row.tolist())
    return label_from_alpha(ar[keep], basis) if keep else _empty(basis)


def _box_bounds(box, n):
    box = np.asarray(box, dtype=float)
    if box.ndim == 1 and box.size == 2:
        lo, hi = np.full(n, box[0]), np.full(n, box[1])
    else:
        box = box.reshape(n, 2)
        lo, hi = box[:, 0], box[:, 1]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
        raise ValueError("alpha box must be bounded and non-empty")
    return lo, hi


def _empty(basis):
    n = basis.size
    return Dataset(np.zeros((0, n)), np.zeros((0, n)), np.zeros(0))


def _concat(parts) -> Dataset:
    return Dataset(np.concatenate([p.u for p in parts]),
                   np.concatenate([p.alpha for p in parts]),
                   np.concatenate([p.h for p in parts]))


def _meta(cfg: SamplerConfig, basis: MomentBasis, algorithm: str) -> dict:
    meta = {"order": basis.order, "dimension": basis.dimension, "algorithm": algorithm,
            "seed": cfg.seed, "quadrature": basis.rule.label}
    if algorithm == "uniform-u":
        meta.update(delta=cfg.delta, tau=cfg.tau)
    else:
        meta["box"] = " ".join(repr(float(b)) for b in np.ravel(cfg.box))
    return meta


# -- persistence -------------------------------------------------------------

def _columns(order, dimension):
    n_r = order if dimension == 1 else (order + 1) * (order + 2) // 2 - 1
    names = [f"u{i}" for i in range(1, n_r + 1)]
    names += [f"alpha{i}" for i in range(n_r + 1)]
    return names + ["h"]


def write_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV: metadata lines ``# key=value``, a column header, rows.

    Floats are written with ``repr`` so reading them back is exact.
    """
    meta = dict(ds.meta)
    order, dimension = int(meta["order"]), int(meta["dimension"])
    lines = [f"# {FORMAT_TAG}"]
    lines += [f"# {k}={v}" for k, v in meta.items()]
    lines.append(",".join(_columns(order, dimension)))
    for u, a, h in zip(ds.u, ds.alpha, ds.h):
        vals = list(u[1:]) + list(a) + [h]
        lines.append(",".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_meta_value(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def read_dataset(path, order: int | None = None, dimension: int | None = None) -> Dataset:
    """Inverse of :func:`write_dataset`; checks ``order``/``dimension`` if given."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != f"# {FORMAT_TAG}":
        raise DatasetFormatError("missing dataset header", line=1)
    meta, header_line, rows = {}, None, []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if not sep:
                raise DatasetFormatError(f"bad metadata line {line!r}", line=lineno)
            meta[key.strip()] = _parse_meta_value(val.strip())
            continue
        if header_line is None:
            header_line = lineno
            try:
                expected = _columns(int(meta["order"]), int(meta["dimension"]))
            except KeyError as exc:
                raise DatasetFormatError(f"metadata lacks {exc}", line=lineno) from None
            if line.strip().split(",") != expected:
                raise DatasetFormatError("column header does not match order/dimension",
                                         line=lineno)
            continue
        fields = line.split(",")
        if len(fields) != len(expected):
            raise DatasetFormatError(
                f"expected {len(expected)} fields, found {len(fields)}", line=lineno)
        try:
            rows.append([float(x) for x in fields])
        except ValueError:
            raise DatasetFormatError(f"non-numeric field in {line!r}", line=lineno) from None
    if header_line is None:
        raise DatasetFormatError("no column header", line=len(text))
    if not rows:
        raise DatasetFormatError("dataset has no samples", line=len(text))
    if order is not None and int(meta["order"]) != order:
        raise DatasetFormatError(f"file has order {meta['order']}, requested {order}")
    if dimension is not None and int(meta["dimension"]) != dimension:
        raise DatasetFormatError(
            f"file has dimension {meta['dimension']}, requested {dimension}")
    data = np.array(rows)
    n_r = (len(expected) - 2) // 2
    ur, alpha, h = data[:, :n_r], data[:, n_r:2 * n_r + 1], data[:, -1]
    u = np.concatenate([np.ones((len(ur), 1)), ur], axis=1)
    return Dataset(u, alpha, h, meta)


def dataset_basis(ds: Dataset) -> MomentBasis:
    """The basis a dataset was generated with, rebuilt from its metadata."""
    return MomentBasis(int(ds.meta["order"]), rule_from_label(str(ds.meta["quadrature"])))


def margin_histogram(ds: Dataset, basis: MomentBasis, bins=(0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0)):
    """Counts of sample margins per bin, for quick summaries."""
    mg = margins(ds.ur, basis)
    counts, edges = np.histogram(np.clip(mg, 0, 1), bins=bins)
    return counts, edges

