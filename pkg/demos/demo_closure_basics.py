"""
Closing a moment vector
=======================

Newton on the dual problem, the scaling identity, and what happens close
to the realizable boundary.
"""
import numpy as np

from entropy_closure import MomentBasis, build_gauss_legendre, solve_dual
from entropy_closure.errors import ClosureError
from entropy_closure.realizability import margins

basis = MomentBasis(2, build_gauss_legendre(28))

# the isotropic state: alpha = [-ln 2, 0, 0]
res = solve_dual(np.array([1.0, 0.0, 1 / 3]), basis)
print("isotropic:", res.alpha, "h =", res.h)

# scaling by u0 only shifts alpha0 by ln u0
u = np.array([1.0, 0.4, 0.3])
a1 = solve_dual(u, basis).alpha
a3 = solve_dual(3 * u, basis).alpha
print("alpha(3u) - alpha(u) =", a3 - a1, " ln 3 =", np.log(3))

# Newton iterations grow as the moment nears the boundary. The last point has
# u1 beyond the largest quadrature node (0.9964), so no nodal density matches it.
for eps in (0.3, 0.1, 0.03, 0.01, 0.003):
    u1 = 1 - eps
    ur = np.array([[u1, u1**2 + eps / 2]])
    try:
        r = solve_dual(np.concatenate([[1.0], ur[0]]), basis)
        print(f"margin {margins(ur, basis)[0]:.4f}: {r.iterations:3d} iterations, "
              f"converged={r.converged}, |alpha| = {np.abs(r.alpha).max():.3g}")
    except ClosureError as exc:
        print(f"margin {margins(ur, basis)[0]:.4f}: {exc}")
