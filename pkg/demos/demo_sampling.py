"""
Two ways to draw training data
==============================

Uniform moments (labelled by Newton) against uniform multipliers (labels in
closed form). The second piles up near the boundary.
"""
import numpy as np

from entropy_closure import MomentBasis, SamplerConfig, build_gauss_legendre
from entropy_closure import sample_uniform_alpha, sample_uniform_moments
from entropy_closure.realizability import margins

basis = MomentBasis(1, build_gauss_legendre(28))
a = sample_uniform_moments(SamplerConfig(count=5000, seed=0), basis)
b = sample_uniform_alpha(SamplerConfig(count=5000, box=(-50, 50), seed=0), basis)

edges = [0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0]
ha = np.histogram(margins(a.ur, basis), edges)[0]
hb = np.histogram(margins(b.ur, basis), edges)[0]
print("margin band       uniform-u  uniform-alpha")
for lo, hi, x, y in zip(edges, edges[1:], ha, hb):
    print(f"[{lo:4.2f}, {hi:4.2f})   {x:9d}  {y:13d}")

# the labels are exact triplets either way
print("max |h - (alpha.u - <exp(alpha.m)>)|:",
      np.abs(b.h - (np.sum(b.alpha * b.u, 1) - b.u[:, 0])).max())
