"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy import integrate, optimize

from fracmap.fields import FunctionExterior, GridSpec, VectorField
from fracmap.reifenberg import plane_objective

COS = lambda p: np.cos(p[:, 0:1])


def cos_field(N, L=32):
    spec = GridSpec.centered(1, L, 1 / N)
    return VectorField(spec, np.cos(spec.coords()[..., 0:1]),
                       FunctionExterior(COS, "cos", [0.0], 0.5, max_cell=0.25))


def cos_theta_exact(r):
    # |grad e^{-z} cos x|^2 = e^{-2z}; the half disc has chord 2 sqrt(r^2 - z^2)
    return integrate.quad(lambda z: math.exp(-2 * z) * math.sqrt(r * r - z * z), 0, r, epsabs=1e-14)[0]


def cos_radial_exact(rho, r, x0):
    def f(s, a):
        x, z = x0 + s * math.cos(a), s * math.sin(a)
        gx, gz = -math.exp(-z) * math.sin(x), -math.exp(-z) * math.cos(x)
        rad = math.cos(a) * gx + math.sin(a) * gz
        return rad * rad * s
    return integrate.dblquad(f, 0, math.pi, rho, r, epsabs=1e-13)[0]


def _basis_from_angles(a, n, k):
    """Orthonormal (k, n) basis of a k-plane parametrized by angles."""
    if k == 0:
        return np.zeros((0, n))
    if k == n:
        return np.eye(n)
    if n == 2:
        return np.array([[math.cos(a[0]), math.sin(a[0])]])
    v = np.array([math.sin(a[0]) * math.cos(a[1]), math.sin(a[0]) * math.sin(a[1]), math.cos(a[0])])
    if k == 1:
        return v[None]
    return np.linalg.svd(v[None])[2][1:]  # plane normal to v


def brute_force_beta(mu, x, r, k, rng, starts=12):
    """Minimize the plane objective over origins and directions with BFGS from several starts."""
    n = mu.n
    na = {0: 0, n: 0}.get(k, n - 1)
    sub = mu.restrict(x, r)
    best = np.inf
    for _ in range(starts):
        p0 = np.concatenate([sub.points[rng.integers(len(sub))], rng.uniform(0, math.pi, na)])
        f = lambda p: plane_objective(mu, x, r, k, p[:n], _basis_from_angles(p[n:], n, k))
        res = optimize.minimize(f, p0, method="BFGS", options={"gtol": 1e-13})
        best = min(best, res.fun)
    return best
