"""
Training an input-convex surrogate
==================================

A 10x7 network on 10^3 M1 moments, then a look at where the error sits.
"""
import time

import numpy as np

from entropy_closure import IcnnModel, MomentBasis, SamplerConfig, build_gauss_legendre
from entropy_closure import infer_normalized, sample_uniform_moments
from entropy_closure.metrics import accuracy, format_accuracy
from entropy_closure.training import TrainConfig, train

basis = MomentBasis(1, build_gauss_legendre(28))
data = sample_uniform_moments(SamplerConfig(count=1000, seed=1), basis)
test = sample_uniform_moments(SamplerConfig(count=10_000, seed=99), basis)

t0 = time.perf_counter()
model, hist = train(IcnnModel(1, 10, 7), data, basis, TrainConfig(epochs=2000))
print(f"trained in {time.perf_counter() - t0:.0f} s, best iteration {hist.best_epoch}")
print(format_accuracy(accuracy(model, test, basis)))

# alpha error by distance to the boundary |u1| = 1
pred = infer_normalized(model, test.ur, basis)
err = np.abs(pred.alpha[:, 1] - test.alpha[:, 1])
u1 = np.abs(test.ur[:, 0])
for lo, hi in [(0, 0.5), (0.5, 0.9), (0.9, 0.97), (0.97, 0.99)]:
    s = (u1 >= lo) & (u1 < hi)
    print(f"|u1| in [{lo}, {hi}): mean |d alpha1| = {err[s].mean():.2e}")

# convex by construction, whatever the fit
x = np.linspace(-0.99, 0.99, 201)[:, None]
print("min second difference of h_theta:", np.diff(model.forward(x), 2).min())
