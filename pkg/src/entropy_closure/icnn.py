"""Input-convex neural network surrogate for the entropy functional.

Layer structure (``width x depth`` layout)::

    z_1     = softplus(Wx_1 x + b_1)                        dense input layer
    z_k     = softplus(Wz_k z_{k-1} + Wx_k x + b_k)         depth convex layers, then
                                                            one bridge of width // 2
    N(x)    = Wz_out z_last + Wx_out x + b_out              linear scalar output

Every ``Wz`` is kept elementwise nonnegative, which together with the convex,
nondecreasing softplus makes ``N`` convex in ``x``.

The Sobolev loss needs the parameter gradient of the input gradient. It is
obtained by pushing a tangent ``G`` through the forward pass (so the output
tangent equals ``G . grad_x N``) and back-propagating through the primal and
tangent computations together.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .entropy import rescale_alpha
from .errors import DomainError, ModelFormatError
from .quadrature import MomentBasis

MODEL_FORMAT = "entropy-closure-icnn"
MODEL_VERSION = 1
INFER_BLOCK = 2048


# past this point softplus(a) == a and sigmoid(a) == 1 in double precision
_SOFTPLUS_CUT = 40.0


def softplus_sigmoid(a):
    """``log(1 + e^a)`` and its derivative, sharing one exponential.

    Cheaper than ``logaddexp`` plus ``expit`` and equal to rounding.
    """
    e = np.exp(np.minimum(a, _SOFTPLUS_CUT))
    sp = np.log1p(e)
    np.copyto(sp, a, where=a > _SOFTPLUS_CUT)
    e /= 1.0 + e
    return sp, e


def softplus(a):
    return softplus_sigmoid(np.asarray(a, dtype=float))[0]


class IcnnModel:
    """Convex scalar network on the reduced normalized moments.

    All parameters live in one flat vector ``theta``; ``params`` maps names
    such as ``layer3.Wz`` to views into it.
    """

    def __init__(self, input_dim: int, width: int, depth: int, seed: int = 0,
                 params: dict | None = None, meta: dict | None = None):
        if input_dim < 1 or width < 2 or depth < 1:
            raise ValueError("need input_dim >= 1, width >= 2, depth >= 1")
        self.input_dim = int(input_dim)
        self.width = int(width)
        self.depth = int(depth)
        self.meta = dict(meta or {})
        self.sizes = [self.width] * (self.depth + 1) + [self.width // 2, 1]
        self.layer_names = [f"layer{k}" for k in range(len(self.sizes))]
        self.shapes = self._shapes()
        self.theta = np.zeros(sum(int(np.prod(s)) for s in self.shapes.values()))
        self.params = self.views(self.theta)
        self._wz_mask = np.zeros(self.theta.size, dtype=bool)
        for k, v in self.views(self._wz_mask).items():
            v[...] = k.endswith(".Wz")
        self.set_params(params if params is not None else self._init_params(seed))

    @property
    def layout(self) -> str:
        return f"{self.width}x{self.depth}"

    def _shapes(self):
        shapes, prev = {}, None
        for name, n in zip(self.layer_names, self.sizes):
            if prev is not None:
                shapes[f"{name}.Wz"] = (n, prev)
            shapes[f"{name}.Wx"] = (n, self.input_dim)
            shapes[f"{name}.b"] = (n,)
            prev = n
        return shapes

    def views(self, flat) -> dict:
        """Named views into a flat vector laid out like ``theta``."""
        out, k = {}, 0
        for name, shape in self.shapes.items():
            n = int(np.prod(shape))
            out[name] = flat[k:k + n].reshape(shape)
            k += n
        return out

    def set_params(self, params: dict) -> None:
        for name, shape in self.shapes.items():
            arr = params.get(name)
            if arr is None or np.shape(arr) != shape:
                raise ModelFormatError(f"parameter {name} missing or not {shape}")
            self.params[name][...] = arr

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        p = {}
        for name, shape in self.shapes.items():
            kind = name.rsplit(".", 1)[1]
            if kind == "Wx":
                p[name] = rng.normal(0.0, 1.0 / np.sqrt(self.input_dim), shape)
            elif kind == "Wz":
                # small nonnegative weights keep activations from growing with depth
                p[name] = np.abs(rng.normal(0.0, 1.0 / shape[1], shape))
            else:
                p[name] = np.zeros(shape)
        return p

    def copy(self) -> "IcnnModel":
        return IcnnModel(self.input_dim, self.width, self.depth,
                         params={k: v.copy() for k, v in self.params.items()},
                         meta=dict(self.meta))

    @property
    def wz_mask(self) -> np.ndarray:
        """Boolean mask of the entries of ``theta`` constrained to be nonnegative."""
        return self._wz_mask

    def project(self) -> None:
        """Clip every ``Wz`` at zero (restores convexity after an update)."""
        np.maximum(self.theta, 0.0, out=self.theta, where=self._wz_mask)

    def min_wz(self) -> float:
        return float(self.theta[self._wz_mask].min())

    # -- evaluation -------------------------------------------------------

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input has {x.shape[-1]} entries, model expects {self.input_dim}")
        return x, single

    def _forward(self, x):
        """Hidden activation slopes, hidden activations and the output ``(B,)``."""
        P = self.params
        sig, act, z = [], [], None
        for name in self.layer_names[:-1]:
            a = x @ P[f"{name}.Wx"].T + P[f"{name}.b"]
            if z is not None:
                a += z @ P[f"{name}.Wz"].T
            z, s = softplus_sigmoid(a)
            sig.append(s)
            act.append(z)
        out = self.layer_names[-1]
        y = z @ P[f"{out}.Wz"][0] + x @ P[f"{out}.Wx"][0] + P[f"{out}.b"][0]
        return sig, act, y

    def forward(self, x):
        """Network output ``h_theta``; scalar for a single input."""
        x, single = self._as_batch(x)
        out = self._forward(x)[2]
        return float(out[0]) if single else out

    def _input_gradient(self, sig, n):
        P, names = self.params, self.layer_names
        out = names[-1]
        grad = np.repeat(P[f"{out}.Wx"], n, axis=0)
        gz = np.repeat(P[f"{out}.Wz"], n, axis=0)
        for k in range(len(sig) - 1, -1, -1):
            delta = gz * sig[k]
            grad += delta @ P[f"{names[k]}.Wx"]
            if k > 0:
                gz = delta @ P[f"{names[k]}.Wz"]
        return grad

    def input_gradient(self, x):
        """Exact ``d N / d x`` by reverse mode; these are the reduced multipliers."""
        x, single = self._as_batch(x)
        grad = self._input_gradient(self._forward(x)[0], len(x))
        return grad[0] if single else grad

    def evaluate(self, x):
        """``(N(x), grad_x N(x))`` from a single forward pass, plus the cache."""
        x, _ = self._as_batch(x)
        sig, act, y = self._forward(x)
        return y, self._input_gradient(sig, len(x)), (x, sig, act)

    def parameter_gradient(self, x, c, tangent, cache=None) -> np.ndarray:
        """Flat gradient of ``sum_b c_b N(x_b) + sum_b G_b . grad_x N(x_b)`` w.r.t. ``theta``.

        ``c`` has shape ``(B,)`` and ``tangent`` (``G``) shape ``(B, input_dim)``.
        ``cache`` is the third item returned by :meth:`evaluate` for the same ``x``.
        """
        if cache is None:
            x, _ = self._as_batch(x)
            sig, act, _ = self._forward(x)
        else:
            x, sig, act = cache
        G = np.asarray(tangent, dtype=float).reshape(x.shape)
        c = np.asarray(c, dtype=float).reshape(len(x))
        names, P = self.layer_names, self.params
        nh = len(names) - 1

        # tangent pass: directional derivative of every activation along G
        z_t, pre_t = [], []
        for k in range(nh):
            name = names[k]
            at = G @ P[f"{name}.Wx"].T
            if k:
                at += z_t[-1] @ P[f"{name}.Wz"].T
            pre_t.append(at)
            z_t.append(sig[k] * at)

        flat = np.empty_like(self.theta)
        grads = self.views(flat)
        out = names[-1]
        grads[f"{out}.Wz"][0] = c @ act[-1] + z_t[-1].sum(axis=0)
        grads[f"{out}.Wx"][0] = c @ x + G.sum(axis=0)
        grads[f"{out}.b"][0] = c.sum()
        wz = P[f"{out}.Wz"][0]
        zbar = c[:, None] * wz
        ztbar = np.broadcast_to(wz, z_t[-1].shape)
        for k in range(nh - 1, -1, -1):
            name = names[k]
            s = sig[k]
            atbar = ztbar * s
            abar = zbar * s + atbar * pre_t[k] * (1.0 - s)
            grads[f"{name}.Wx"][...] = abar.T @ x + atbar.T @ G
            grads[f"{name}.b"][...] = abar.sum(axis=0)
            if k:
                Wz = P[f"{name}.Wz"]
                grads[f"{name}.Wz"][...] = abar.T @ act[k - 1] + atbar.T @ z_t[k - 1]
                zbar = abar @ Wz
                ztbar = atbar @ Wz
        return flat

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT, "version": MODEL_VERSION,
            "input_dim": self.input_dim, "width": self.width, "depth": self.depth,
            "activation": "softplus",
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IcnnModel":
        if d.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not an ICNN model file")
        if d.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
        try:
            params = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
                      for k, v in d["params"].items()}
            return cls(d["input_dim"], d["width"], d["depth"], params=params,
                       meta=d.get("meta", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model file: {exc}") from None


def save_model(model: IcnnModel, path) -> None:
    """Write the model as JSON; floats round-trip exactly."""
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path, basis: MomentBasis | None = None) -> IcnnModel:
    """Read a model; with ``basis`` given, check that the input sizes agree."""
    raw = Path(path).read_bytes()
    try:
        d = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ModelFormatError(f"{path}: not a readable model file") from None
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: not a model file")
    model = IcnnModel.from_dict(d)
    if basis is not None and model.input_dim != basis.reduced_size:
        raise ModelFormatError(
            f"model takes {model.input_dim} reduced moments, "
            f"{basis.describe()} has {basis.reduced_size}")
    return model


# -- inference --------------------------------------------------------------

@dataclass
class InferenceResult:
    h: np.ndarray
    alpha: np.ndarray
    u: np.ndarray


@dataclass
class Reconstruction:
    """Unit-mass closure quantities derived from reduced multipliers."""

    alpha0: np.ndarray
    u: np.ndarray
    p: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)

    def covariance(self, basis: MomentBasis) -> np.ndarray:
        """``d u / d alpha_r`` for every sample, shape ``(B, n, n - 1)``."""
        m = basis.eval_table
        second = np.einsum("bq,iq,jq->bij", self.p * basis.rule.weights, m, m[1:])
        second /= self.z[:, None, None]
        return second - self.u[:, :, None] * self.u[:, None, 1:]


def reconstruct(alpha_r, basis: MomentBasis) -> Reconstruction:
    """``alpha_0`` and moments of ``exp(alpha . m)`` with unit mass."""
    alpha_r = np.atleast_2d(alpha_r)
    expo = alpha_r @ basis.eval_table[1:]
    shift = expo.max(axis=1, keepdims=True)
    p = np.exp(expo - shift)
    mom = np.einsum("bq,iq->bi", p * basis.rule.weights, basis.eval_table)
    z = mom[:, 0].copy()
    u = mom / z[:, None]
    alpha0 = -(np.log(z) + shift[:, 0])
    return Reconstruction(alpha0, u, p, z)


def infer_normalized(model: IcnnModel, ur, basis: MomentBasis) -> InferenceResult:
    """``h_theta``, full ``alpha_theta`` and ``u_theta`` for normalized inputs."""
    ur = np.asarray(ur, dtype=float)
    single = ur.ndim == 1
    x = np.atleast_2d(ur)
    hs, alphas, us = [], [], []
    # cache-sized blocks: large batches are bound by memory traffic, not arithmetic
    for lo in range(0, max(len(x), 1), INFER_BLOCK):
        h, ar, _ = model.evaluate(x[lo:lo + INFER_BLOCK])
        rec = reconstruct(ar, basis)
        hs.append(h)
        alphas.append(np.concatenate([rec.alpha0[:, None], ar], axis=1))
        us.append(rec.u)
    h, alpha, u = (np.concatenate(v) for v in (hs, alphas, us))
    if single:
        return InferenceResult(float(h[0]), alpha[0], u[0])
    return InferenceResult(h, alpha, u)


def infer_scaled(model: IcnnModel, u, basis: MomentBasis) -> InferenceResult:
    """Closure for unnormalized moments via the ``ln u0`` shift of ``alpha_0``.

    ``h`` and ``u`` refer to the normalized problem; ``alpha`` is rescaled.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u[..., 0] <= 0):
        raise DomainError("u0 must be positive")
    res = infer_normalized(model, u[..., 1:] / u[..., :1], basis)
    res.alpha = rescale_alpha(res.alpha, u[..., 0])
    return res


# -- loss -------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    h: float = 1.0
    alpha: float = 1.0
    u: float = 1.0

    def __post_init__(self):
        if min(self.h, self.alpha, self.u) < 0:
            raise ValueError("loss weights must be nonnegative")


def loss(model: IcnnModel, batch, basis: MomentBasis, weights: LossWeights = LossWeights(),
         alpha_mode: str = "full", with_grad: bool = False):
    """Sobolev loss ``w_h |h - h_t|^2 + w_a |alpha - alpha_t|^2 + w_u |u - u_t|^2``.

    Averaged over the batch. ``alpha_mode='full'`` compares all multipliers
    including the reconstructed ``alpha_0``; ``'reduced'`` compares only
    ``alpha_r``. Returns ``(total, terms)`` or ``(total, terms, grads)`` with ``grads`` a
    flat vector laid out like ``model.theta``.
    """
    if len(batch) == 0:
        raise ValueError("loss needs a non-empty batch")
    if alpha_mode not in ("full", "reduced"):
        raise ValueError("alpha_mode must be 'full' or 'reduced'")
    x, u, alpha, h = batch.u[:, 1:], batch.u, batch.alpha, batch.h
    B = len(h)
    h_t, ar, cache = model.evaluate(x)
    rec = reconstruct(ar, basis)
    dh = h_t - h
    dar = ar - alpha[:, 1:]
    da0 = rec.alpha0 - alpha[:, 0]
    du = rec.u - u
    term_h = float(np.mean(dh**2))
    term_a = float(np.mean(np.sum(dar**2, axis=1) + (da0**2 if alpha_mode == "full" else 0.0)))
    term_u = float(np.mean(np.sum(du**2, axis=1)))
    total = weights.h * term_h + weights.alpha * term_a + weights.u * term_u
    terms = {"h": term_h, "alpha": term_a, "u": term_u}
    if not with_grad:
        return total, terms
    c = 2.0 * weights.h * dh / B
    G = 2.0 * weights.alpha * dar
    if alpha_mode == "full":
        # d alpha_0 / d alpha_r = -u_r
        G -= 2.0 * weights.alpha * da0[:, None] * rec.u[:, 1:]
    if weights.u:
        G += 2.0 * weights.u * np.einsum("bi,bij->bj", du, rec.covariance(basis))
    grads = model.parameter_gradient(x, c, G / B, cache)
    return total, terms, grads
