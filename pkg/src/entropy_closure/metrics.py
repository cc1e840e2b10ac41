"""Accuracy metrics and timing benchmarks for closure backends."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .icnn import IcnnModel, infer_normalized
from .newton import NewtonConfig, newton_batch
from .quadrature import MomentBasis
from .realizability import margins
from .sampling import Dataset, draw_realizable

POPULATIONS = ("uniform", "interior", "boundary")


def accuracy(model: IcnnModel, data: Dataset, basis: MomentBasis) -> dict:
    """MSE and MAE of ``h``, ``alpha`` and ``u`` over a labelled set.

    Vector quantities are averaged over samples and components.
    """
    pred = infer_normalized(model, data.ur, basis)
    out = {}
    for name, p, t in (("h", pred.h, data.h), ("alpha", pred.alpha, data.alpha),
                       ("u", pred.u, data.u)):
        d = np.asarray(p) - t
        out[f"mse_{name}"] = float(np.mean(d**2))
        out[f"mae_{name}"] = float(np.mean(np.abs(d)))
    return out


def format_accuracy(m: dict) -> str:
    head = "MSE(h)      MSE(alpha)  MSE(u)      MAE(h)      MAE(alpha)  MAE(u)"
    vals = [m[f"{k}_{q}"] for k in ("mse", "mae") for q in ("h", "alpha", "u")]
    return head + "\n" + "  ".join(f"{v:<10.3e}" for v in vals)


def population(kind: str, count: int, basis: MomentBasis, seed: int = 0,
               boundary_margin: float = 0.01, band: float = 0.1,
               interior_margin: float = 0.1) -> np.ndarray:
    """Normalized moments for one benchmark scenario, shape ``(count, n)``.

    ``uniform`` draws over the realizable set, ``boundary`` keeps points with
    margin within ``band`` (relative) of ``boundary_margin`` and ``interior``
    keeps points with margin above ``interior_margin``.
    """
    if kind not in POPULATIONS:
        raise ValueError(f"unknown population {kind!r}; choose from {', '.join(POPULATIONS)}")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        lo, hi = 0.0, np.inf  # margin window (lo, hi)
    elif kind == "boundary":
        lo, hi = boundary_margin * (1 - band), boundary_margin * (1 + band)
    else:
        lo, hi = interior_margin, np.inf
    kept, n = [], 0
    while n < count:
        ur = draw_realizable(rng, max(4 * count, 1000), basis, lo)[0]
        ur = ur[margins(ur, basis) < hi]
        kept.append(ur)
        n += len(ur)
    ur = np.concatenate(kept)[:count]
    return np.concatenate([np.ones((count, 1)), ur], axis=1)


@dataclass
class Timing:
    backend: str
    population: str
    batch: int
    mean: float
    std: float
    repeats: int

    @property
    def per_sample(self) -> float:
        return self.mean / self.batch

    def row(self) -> dict:
        return {"backend": self.backend, "population": self.population, "batch": self.batch,
                "repeats": self.repeats, "mean_s": self.mean, "std_s": self.std,
                "per_sample_s": self.per_sample}


def _time(fn, repeats):
    fn()  # warm-up
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    ts = np.array(ts)
    return float(ts.mean()), float(ts.std(ddof=1)) if repeats > 1 else 0.0


def benchmark(basis: MomentBasis, model: IcnnModel | None, batches=(1000,), repeats: int = 20,
              populations=POPULATIONS, newton: NewtonConfig | None = None,
              seed: int = 0, backends=("newton", "icnn")) -> list[Timing]:
    """Wall-clock time of one batched closure per backend, population and size.

    The ICNN is timed only when a model is given.
    """
    if repeats < 2:
        raise ValueError("at least two repetitions are needed for a spread")
    newton = newton or NewtonConfig()
    out = []
    for kind in populations:
        for b in batches:
            u = population(kind, b, basis, seed)
            if "newton" in backends:
                mean, std = _time(lambda: newton_batch(u, basis, newton), repeats)
                out.append(Timing("newton", kind, b, mean, std, repeats))
            if model is not None and "icnn" in backends:
                mean, std = _time(lambda: infer_normalized(model, u[:, 1:], basis), repeats)
                out.append(Timing("icnn", kind, b, mean, std, repeats))
    return out


def format_timings(rows: list[Timing]) -> str:
    lines = [f"{'backend':8s} {'population':10s} {'batch':>8s} {'mean [s]':>11s} "
             f"{'std [s]':>10s} {'per sample [s]':>15s}"]
    for t in rows:
        lines.append(f"{t.backend:8s} {t.population:10s} {t.batch:8d} {t.mean:11.4e} "
                     f"{t.std:10.2e} {t.per_sample:15.3e}")
    return "\n".join(lines)
