"""Independent reference computations used by the test-suite.

Nothing here calls into the library's numerical routines: each oracle is a
from-scratch implementation of the quantity it checks.
"""

from __future__ import annotations

import numpy as np

# Frozen expected values, computed by hand.
PATH3_DENSITY_MID_P2 = 2.0  # (1^2 + 1^2)^1
PATH3_DENSITY_MID_P4 = 4.0  # (1^2 + 1^2)^2
PATH3_ENERGY_P2 = 2.0  # (1 + 2 + 1) / 2
PATH3_TENSION_HALF = 2.0  # values (0, .5, 2): -dE/dx = -(4x - 4) at x = .5


def minkowski(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def hyperbolic_distance(x, y, kappa=-1.0):
    R = 1.0 / np.sqrt(-kappa)
    return R * np.arccosh(np.maximum(-minkowski(x, y) / R**2, 1.0))


def hyperboloid_point(s, dim=2, axis=1, R=1.0):
    p = np.zeros(dim + 1)
    p[0] = R * np.cosh(s / R)
    p[axis] = R * np.sinh(s / R)
    return p


def rk4(f, y0, t0, t1, n):
    y = np.array(y0, dtype=float)
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def jacobi_bvp_rk4(K, L, z0, z1, n=2000):
    """Solve ``z'' = -K z`` with ``z(0) = z0``, ``z(L) = z1`` by linear shooting with RK4.

    Returns a function giving ``z(t)`` (re-integrating from 0).
    """
    d = len(z0)

    def f(t, y):
        return np.concatenate([y[d:], -K @ y[:d]])

    # z(L) is affine in the initial slope s: z(L) = A s + c
    c = rk4(f, np.concatenate([z0, np.zeros(d)]), 0.0, L, n)[:d]
    A = np.column_stack([rk4(f, np.concatenate([np.zeros(d), e]), 0.0, L, n)[:d] for e in np.eye(d)])
    s = np.linalg.solve(A, z1 - c)

    def z(t):
        if t == 0:
            return np.array(z0, dtype=float)
        m = max(1, int(round(n * t / L)))
        return rk4(f, np.concatenate([z0, s]), 0.0, t, m)[:d]

    return z


def transport_rk4(a, b, v, kappa=-1.0, n=400):
    """Parallel transport on the hyperboloid by integrating ``V' = <V, g'> g / R^2`` along the geodesic."""
    R2 = -1.0 / kappa
    d = hyperbolic_distance(a, b, kappa)
    R = np.sqrt(R2)
    w = b + (minkowski(a, b) / R2) * a
    u = w / np.sqrt(minkowski(w, w))  # unit initial direction

    def gamma(s):
        return np.cosh(s / R) * a + R * np.sinh(s / R) * u

    def dgamma(s):
        return np.sinh(s / R) / R * a + np.cosh(s / R) * u

    def f(s, V):
        return (minkowski(V, dgamma(s)) / R2) * gamma(s)

    return rk4(f, v, 0.0, d, n)


def scalar_laplacian_solve(n_vertices, edges, weights, fixed_idx, fixed_val):
    """Dense weighted graph Laplacian Dirichlet solve for a real-valued map."""
    Lm = np.zeros((n_vertices, n_vertices))
    for (a, b), w in zip(edges, weights):
        Lm[a, a] += w
        Lm[b, b] += w
        Lm[a, b] -= w
        Lm[b, a] -= w
    x = np.zeros(n_vertices)
    x[fixed_idx] = fixed_val
    free = np.setdiff1d(np.arange(n_vertices), fixed_idx)
    x[free] = np.linalg.solve(Lm[np.ix_(free, free)], -Lm[np.ix_(free, fixed_idx)] @ x[fixed_idx])
    return x


def vertex_energy_scalar(x, edges, weights, mu, p):
    """``(1/p) sum_q mu_q (sum_{q'} w (x_q' - x_q)^2)^(p/2)`` written out directly."""
    S = np.zeros(len(x))
    for (a, b), w in zip(edges, weights):
        d2 = (x[a] - x[b]) ** 2
        S[a] += w * d2
        S[b] += w * d2
    return float(np.sum(mu * S ** (p / 2)) / p)


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def cycle_rotation_energy(n, period, p, phase_shift):
    """Energy of ``C_n -> circle`` with vertex ``k`` at ``k/n + s_k`` where only vertex 0 moves by ``phase_shift``."""
    x = np.arange(n) / n * period
    x[0] += phase_shift
    edges = [(k, (k + 1) % n) for k in range(n)]
    S = np.zeros(n)
    for a, b in edges:
        d = x[b] - x[a]
        d -= period * np.round(d / period)
        S[a] += d * d
        S[b] += d * d
    return float(np.sum(S ** (p / 2)) / p)


def affine_path_energy(n_edges, p, lo=0.0, hi=1.0):
    """Vertex energy of the affine map on a path with ``n_edges`` unit edges."""
    h = (hi - lo) / n_edges
    S = np.full(n_edges + 1, 2 * h * h)
    S[0] = S[-1] = h * h
    return float(np.sum(S ** (p / 2)) / p)
