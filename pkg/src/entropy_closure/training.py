"""Training of the ICNN surrogate.

Two optimizers share one loss: full-batch L-BFGS-B with the ``Wz >= 0``
constraint as simple bounds (the default), and minibatch Adam followed by
projection onto the constraint.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ClosureError
from .icnn import IcnnModel, LossWeights, loss
from .quadrature import MomentBasis
from .sampling import Dataset

log = logging.getLogger(__name__)

LAYOUTS = {(1, 1): (10, 7), (1, 2): (15, 7), (2, 1): (18, 8)}


def default_layout(dimension: int, order: int) -> tuple[int, int]:
    return LAYOUTS.get((dimension, order), (15, 7))


class TrainingDivergedError(ClosureError):
    """Loss became non-finite; ``model`` holds the last good parameters."""

    def __init__(self, msg, model=None, history=None):
        super().__init__(msg)
        self.model = model
        self.history = history


@dataclass
class TrainConfig:
    epochs: int = 5000          # L-BFGS iterations or Adam epochs
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    lr_factor: float = 0.5
    min_lr: float = 1e-6
    val_fraction: float = 0.1
    alpha_mode: str = "full"
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    max_grad_norm: float = 0.0  # 0 disables clipping
    schedule: str = "plateau"   # or "cosine": anneal lr to min_lr over the run
    optimizer: str = "lbfgs"    # or "adam"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.schedule not in ("plateau", "cosine"):
            raise ValueError("schedule must be 'plateau' or 'cosine'")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ValueError("optimizer must be 'lbfgs' or 'adam'")
        if self.alpha_mode not in ("full", "reduced"):
            raise ValueError("alpha_mode must be 'full' or 'reduced'")


class Adam:
    """Adam on a flat parameter vector, updated in place."""

    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        theta -= self.lr * (self.m / c1) / (np.sqrt(self.v / c2) + self.eps)


@dataclass
class TrainHistory:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1

    def as_rows(self):
        for e, (tr, va, lr) in enumerate(zip(self.train, self.val, self.lr)):
            yield {"epoch": e, "lr": lr, **{f"train_{k}": v for k, v in tr.items()},
                   **{f"val_{k}": v for k, v in va.items()}}


def _evaluate(model, data, basis, cfg):
    total, terms = loss(model, data, basis, cfg.weights, cfg.alpha_mode)
    return {"total": total, **terms}


def _run_adam(model, data, validation, basis, cfg, callback):
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.theta.size, cfg.lr)
    hist = TrainHistory()
    best = model.copy()
    best_val = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        if cfg.schedule == "cosine":
            opt.lr = cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1 + np.cos(np.pi * epoch / cfg.epochs))
        order = rng.permutation(len(data))
        acc = {"total": 0.0, "h": 0.0, "alpha": 0.0, "u": 0.0}
        for lo in range(0, len(order), cfg.batch_size):
            batch = data[order[lo:lo + cfg.batch_size]]
            total, terms, grads = loss(model, batch, basis, cfg.weights, cfg.alpha_mode,
                                       with_grad=True)
            if not np.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite training loss in epoch {epoch}", best, hist)
            if cfg.max_grad_norm > 0:
                gn = float(np.linalg.norm(grads))
                if gn > cfg.max_grad_norm:
                    grads *= cfg.max_grad_norm / gn
            opt.step(model.theta, grads)
            model.project()
            n = len(batch)
            acc["total"] += total * n
            for k, v in terms.items():
                acc[k] += v * n
        hist.train.append({k: v / len(data) for k, v in acc.items()})
        val = _evaluate(model, validation, basis, cfg)
        hist.val.append(val)
        hist.lr.append(opt.lr)
        if not np.isfinite(val["total"]):
            raise TrainingDivergedError(f"non-finite validation loss in epoch {epoch}", best, hist)
        if val["total"] < best_val:
            best_val, best, stale = val["total"], model.copy(), 0
            hist.best_epoch = epoch
        elif cfg.schedule == "plateau":
            stale += 1
            if stale >= cfg.patience and opt.lr > cfg.min_lr:
                opt.lr = max(opt.lr * cfg.lr_factor, cfg.min_lr)
                stale = 0
                log.info("epoch %d: learning rate -> %.3g", epoch, opt.lr)
        if callback is not None:
            callback(epoch, hist)
    return best, hist, best_val


def _run_lbfgs(model, data, validation, basis, cfg, callback):
    hist = TrainHistory()
    best, best_val = model.copy(), np.inf
    seen = {}

    def fun(theta):
        model.theta[:] = theta
        total, terms, grads = loss(model, data, basis, cfg.weights, cfg.alpha_mode,
                                   with_grad=True)
        if not np.isfinite(total):
            raise TrainingDivergedError("non-finite training loss", best, hist)
        seen["theta"], seen["terms"] = theta.copy(), {"total": total, **terms}
        return total, grads

    def after_iteration(theta):
        nonlocal best, best_val
        model.theta[:] = theta
        if np.array_equal(theta, seen["theta"]):
            hist.train.append(seen["terms"])
        else:
            hist.train.append(_evaluate(model, data, basis, cfg))
        val = _evaluate(model, validation, basis, cfg)
        hist.val.append(val)
        hist.lr.append(float("nan"))
        if not np.isfinite(val["total"]):
            raise TrainingDivergedError("non-finite validation loss", best, hist)
        if val["total"] < best_val:
            best_val, best = val["total"], model.copy()
            hist.best_epoch = len(hist.val) - 1
        if callback is not None:
            callback(len(hist.val) - 1, hist)

    model.project()
    lower = np.where(model.wz_mask, 0.0, -np.inf)
    bounds = list(zip(lower, np.full_like(lower, np.inf)))
    theta, last = model.theta.copy(), np.inf
    # a failed line search ends a run early; restarting drops the stale curvature pairs
    while len(hist.val) < cfg.epochs:
        left = cfg.epochs - len(hist.val)
        res = minimize(fun, theta, jac=True, method="L-BFGS-B", bounds=bounds,
                       callback=after_iteration,
                       options={"maxiter": left, "maxfun": 2 * left, "ftol": 0.0, "gtol": 0.0})
        if res.nit == 0 or not res.fun < last * (1 - 1e-9):
            break
        theta, last = res.x, res.fun
    if not hist.val:
        after_iteration(model.theta.copy())
    return best, hist, best_val


def train(model: IcnnModel, data: Dataset, basis: MomentBasis,
          cfg: TrainConfig | None = None, validation: Dataset | None = None,
          callback=None) -> tuple[IcnnModel, TrainHistory]:
    """Train in place and return ``(best_model, history)``.

    Runs are reproducible for a fixed ``cfg.seed``. With Adam the learning
    rate halves after ``patience`` epochs without validation improvement (or
    follows a cosine schedule). Either way the iterate with the lowest
    validation loss is returned.
    """
    cfg = cfg or TrainConfig()
    if model.input_dim != basis.reduced_size:
        raise ValueError("model input size does not match the basis")
    if validation is None and cfg.val_fraction > 0:
        data, validation = data.split(cfg.val_fraction, seed=cfg.seed)
    if validation is None or len(validation) == 0:
        validation = data
    if len(data) == 0:
        raise ValueError("empty training set")
    if cfg.optimizer == "lbfgs":
        best, hist, best_val = _run_lbfgs(model, data, validation, basis, cfg, callback)
    else:
        best, hist, best_val = _run_adam(model, data, validation, basis, cfg, callback)
    best.meta.update({"order": basis.order, "dimension": basis.dimension,
                      "quadrature": basis.rule.label, "alpha_mode": cfg.alpha_mode,
                      "epochs": cfg.epochs, "seed": cfg.seed, "best_val_loss": best_val})
    model.set_params(best.params)
    return best, hist
