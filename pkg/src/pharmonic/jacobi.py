"""Jacobi fields and the Hessian of distance (squared) on ``N x N``.

Every model target is locally symmetric, so in a parallel orthonormal frame
along a geodesic the Jacobi operator ``Z -> R(Z, T)T`` is a constant matrix
``K``.  The Jacobi equation ``c'' + K c = 0`` then decouples in the
eigenbasis of ``-K`` (eigenvalues ``>= 0``) into scalar problems with
``sinh``/affine solutions, which gives boundary-value solutions in closed
form for every kind, products included.

Three independent evaluations of ``Hess r^2`` are provided:

* :func:`hessian_dist_sq_closed` -- the three-integral nonnegative form,
* :func:`hessian_dist_sq_second_variation` -- second variation of arc length
  plus ``Hess r^2 = 2 r Hess r + 2 dr (x) dr``,
* :func:`hessian_fd_oracle` -- mixed central differences along geodesic
  variations with a parallel-transported second direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .geometry import FlatTorus, GeometryError, ModelManifold

__all__ = [
    "GeodesicSegment",
    "JacobiSolution",
    "HessianReport",
    "kappa_p",
    "solve_jacobi_bvp",
    "simpson",
    "hessian_dist_sq_closed",
    "second_variation",
    "hessian_dist_sq_second_variation",
    "hessian_dist_sq",
    "hessian_fd_oracle",
    "dist_sq",
    "random_case",
]

SIMPSON_TOL = 1e-8
SIMPSON_K0 = 6
SIMPSON_KMAX = 20
# eigenvalues of -K below this are treated as flat modes
FLAT_EIG = 1e-14


def kappa_p(manifold: ModelManifold, x, X, p: float):
    """Rescale ``X`` to ``|X|^(p-2) X``.

    The zero vector maps to zero; for ``p == 2`` the map is the identity.
    """
    if p < 2:
        raise GeometryError(f"p must be >= 2, got {p}")
    X = np.asarray(X, dtype=float)
    if p == 2:
        return X.copy()
    n = manifold.norm(x, X)
    return (n ** (p - 2))[..., None] * X


def simpson(values, h):
    """Composite Simpson rule on an odd number of equally spaced samples."""
    values = np.asarray(values, dtype=float)
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum() + 2.0 * values[2:-1:2].sum())


def _adaptive_simpson(fn, length, tol=SIMPSON_TOL, k0=SIMPSON_K0, kmax=SIMPSON_KMAX):
    """Integrate a vector of integrands over ``[0, length]``.

    ``fn(t)`` returns an array of shape ``(m, len(t))``.  The grid is doubled
    until the largest change is below ``tol * max(1, |I|)``.
    """
    prev = None
    for k in range(k0, kmax + 1):
        t = np.linspace(0.0, length, 2**k + 1)
        vals = fn(t)
        h = length / 2**k
        cur = np.array([simpson(v, h) for v in vals])
        if prev is not None and np.all(np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))):
            return cur, 2**k + 1, True
        prev = cur
    return cur, 2**kmax + 1, False


class GeodesicSegment:
    """Arclength-parametrized minimizing geodesic from ``a`` to ``b``.

    Tangent vectors along the segment are handled through coefficient vectors
    in a parallel orthonormal frame ``E_i(t)`` obtained by transporting
    ``manifold.tangent_basis(a)``.
    """

    def __init__(self, manifold: ModelManifold, a, b):
        a, b = manifold.check(a, b)
        self.manifold = manifold
        self.a = a
        self.b = b
        log_ab = manifold.log(a, b)
        self.length = float(manifold.norm(a, log_ab))
        if self.length == 0.0:
            raise GeometryError("degenerate geodesic segment: a == b")
        self.direction = log_ab / self.length
        self.basis = manifold.tangent_basis(a)

    @cached_property
    def tau(self):
        """Frame coefficients of the unit tangent ``T`` (constant along the segment)."""
        return self.coefficients(self.direction)

    @cached_property
    def jacobi_operator(self):
        """Symmetric matrix ``K_ij = <R(E_j, T)T, E_i>`` in the parallel frame."""
        M, a = self.manifold, self.a
        cols = [M.curvature(a, E, self.direction) for E in self.basis]
        K = np.array([[M.inner(a, col, Ei) for col in cols] for Ei in self.basis])
        return 0.5 * (K + K.T)

    @cached_property
    def end_tangent(self):
        return self.manifold.transport(self.direction, self.a, self.b)

    def coefficients(self, X, at: str = "a"):
        """Frame coefficients of a vector based at ``a`` (or at ``b``)."""
        M = self.manifold
        X = M.check(X)
        if at == "b":
            X = M.transport(X, self.b, self.a)
        return np.array([M.inner(self.a, X, Ei) for Ei in self.basis])

    def points(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.manifold.exp(self.a, t[:, None] * self.direction)

    def vectors(self, coeffs, t):
        """Ambient vectors at ``gamma(t)`` from frame coefficients ``(n, dim)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        coeffs = np.atleast_2d(coeffs)
        at_a = coeffs @ self.basis
        pts = self.points(t)
        start = np.broadcast_to(self.a, pts.shape)
        return self.manifold.transport(at_a, start, pts)

    def dr(self, X1, X2):
        """Differential of the distance: ``-<X1, T(0)> + <X2, T(L)>``."""
        M = self.manifold
        return float(-M.inner(self.a, X1, self.direction) + M.inner(self.b, X2, self.end_tangent))


@dataclass
class JacobiSolution:
    """Jacobi field along a segment with prescribed end values.

    ``samples`` holds ``(t, Z(t))`` pairs on a uniform arclength grid; the
    coefficient functions (and their first two derivatives) are exact.
    """

    segment: GeodesicSegment
    z0: np.ndarray
    z1: np.ndarray
    samples: list = field(default_factory=list)

    def __post_init__(self):
        lam, Q = np.linalg.eigh(-self.segment.jacobi_operator)
        if np.any(lam < -1e-10):
            raise RuntimeError("positive curvature along segment: Jacobi BVP not supported")
        self._omega = np.sqrt(np.clip(lam, 0.0, None))
        self._omega[lam < FLAT_EIG] = 0.0
        self._Q = Q
        self._y0 = Q.T @ self.z0
        self._y1 = Q.T @ self.z1

    def _modes(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        L = self.segment.length
        w = self._omega[None, :]
        flat = w == 0.0
        ws = np.where(flat, 1.0, w)
        S = lambda s: np.where(flat, s, np.sinh(ws * s) / ws)  # noqa: E731
        C = lambda s: np.where(flat, 1.0, np.cosh(ws * s))  # noqa: E731
        SL = S(np.asarray(L))
        y = (S(L - t) * self._y0 + S(t) * self._y1) / SL
        dy = (-C(L - t) * self._y0 + C(t) * self._y1) / SL
        return y, dy, (w**2) * y

    def coeffs(self, t):
        return self._modes(t)[0] @ self._Q.T

    def dcoeffs(self, t):
        """Coefficients of ``nabla_T Z``."""
        return self._modes(t)[1] @ self._Q.T

    def ddcoeffs(self, t):
        return self._modes(t)[2] @ self._Q.T

    def field(self, t):
        return self.segment.vectors(self.coeffs(t), t)

    def covariant_derivative(self, t):
        return self.segment.vectors(self.dcoeffs(t), t)

    @property
    def boundary(self):
        return self.field([0.0])[0], self.field([self.segment.length])[0]

    def residual(self, t):
        """Sup-norm of ``nabla_T nabla_T Z + R(Z, T)T`` in frame coordinates."""
        c = self.coeffs(t)
        return float(np.abs(self.ddcoeffs(t) + c @ self.segment.jacobi_operator.T).max())


def solve_jacobi_bvp(segment: GeodesicSegment, Z0, Z1, steps: int = 64) -> JacobiSolution:
    """Jacobi field along ``segment`` with ``Z(0) = Z0`` and ``Z(L) = Z1``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z0 = segment.coefficients(Z0, at="a")
    z1 = segment.coefficients(Z1, at="b")
    sol = JacobiSolution(segment, z0, z1)
    ts = np.linspace(0.0, segment.length, steps + 1)
    sol.samples = list(zip(ts.tolist(), sol.field(ts)))
    return sol


@dataclass
class HessianReport:
    value: float
    parts: dict
    dr_X: float
    length: float = 0.0
    p: float = 2.0
    zero_crossing: bool = False
    n_samples: int = 0
    converged: bool = True

    def to_dict(self):
        return {
            "value": self.value,
            "parts": dict(self.parts),
            "dr_X": self.dr_X,
            "length": self.length,
            "p": self.p,
            "zero_crossing": self.zero_crossing,
            "n_samples": self.n_samples,
            "converged": self.converged,
        }


def _pow_norm(n2, expo):
    """``|Z|^expo`` from ``|Z|^2`` with ``0^expo := 0`` for ``expo > 0`` and ``1`` for 0."""
    if expo == 0:
        return np.ones_like(n2)
    with np.errstate(divide="ignore"):
        return np.where(n2 > 0, n2 ** (0.5 * expo), 0.0)


def hessian_dist_sq_closed(manifold: ModelManifold, a, b, X1, X2, p: float) -> HessianReport:
    """``Hess r^2 ((X1, X2), (k_p X1, k_p X2))`` as a sum of three nonnegative integrals.

    With ``Z`` the Jacobi field with ends ``X1, X2`` and ``L = r(a, b)``::

        2L int |Z|^(p-2) (|nabla Z_perp|^2 - <R(Z,T)T, Z>)
          + L int T(|Z|^(p-2)) T(|Z|^2)
          + 2 dr(X)^2 / L int |Z|^(p-2)

    The middle integrand is evaluated as ``2(p-2)|Z|^(p-4) <Z, Z'>^2`` and
    set to 0 where ``Z`` vanishes.
    """
    if p < 2:
        raise GeometryError(f"p must be >= 2, got {p}")
    seg = GeodesicSegment(manifold, a, b)
    sol = solve_jacobi_bvp(seg, X1, X2, steps=1)
    L = seg.length
    tau = seg.tau
    K = seg.jacobi_operator
    zero_hit = [False]

    def integrands(t):
        c = sol.coeffs(t)
        cp = sol.dcoeffs(t)
        n2 = np.sum(c * c, axis=1)
        if np.any(n2 == 0.0):
            zero_hit[0] = True
        cp_perp = cp - np.outer(cp @ tau, tau)
        curv = np.einsum("ni,ij,nj->n", c, K, c)
        w = _pow_norm(n2, p - 2)
        f1 = w * (np.sum(cp_perp**2, axis=1) - curv)
        f2 = 2.0 * (p - 2.0) * _pow_norm(n2, p - 4) * np.sum(c * cp, axis=1) ** 2 if p != 2 else 0.0 * n2
        return np.vstack([f1, f2, w])

    (i1, i2, i3), n, ok = _adaptive_simpson(integrands, L)
    drx = seg.dr(X1, X2)
    parts = {
        "curvature_term": 2.0 * L * i1,
        "derivative_term": L * i2,
        "radial_term": 2.0 * drx**2 / L * i3,
    }
    value = parts["curvature_term"] + parts["derivative_term"] + parts["radial_term"]
    return HessianReport(
        value=float(value),
        parts={k: float(v) for k, v in parts.items()},
        dr_X=drx,
        length=L,
        p=float(p),
        zero_crossing=zero_hit[0],
        n_samples=n,
        converged=ok,
    )


def second_variation(segment: GeodesicSegment, Z0, Z1, W0, W1) -> float:
    """Second variation of arc length for the Jacobi fields with the given ends.

    ``int <Z', W'> - int <R(W,T)T, Z> - int T<Z,T> T<W,T>``; equals
    ``Hess r((Z0, Z1), (W0, W1))`` when the end variations are geodesic.
    """
    if segment.length == 0.0:
        raise GeometryError("second variation needs a nondegenerate segment")
    zs = solve_jacobi_bvp(segment, Z0, Z1, steps=1)
    ws = solve_jacobi_bvp(segment, W0, W1, steps=1)
    tau = segment.tau
    K = segment.jacobi_operator

    def integrands(t):
        zc, zp = zs.coeffs(t), zs.dcoeffs(t)
        wc, wp = ws.coeffs(t), ws.dcoeffs(t)
        a = np.sum(zp * wp, axis=1)
        b = np.einsum("ni,ij,nj->n", zc, K, wc)
        c = (zp @ tau) * (wp @ tau)
        return np.vstack([a - b - c])

    (val,), _, _ = _adaptive_simpson(integrands, segment.length)
    return float(val)


def hessian_dist_sq(manifold: ModelManifold, a, b, X, Y) -> float:
    """Bilinear ``Hess r^2|_(a,b)(X, Y)`` for ``X = (X1, X2)``, ``Y = (Y1, Y2)``.

    On the diagonal this is ``2 <X1 - X2, Y1 - Y2>``.
    """
    X1, X2 = X
    Y1, Y2 = Y
    if float(manifold.distance(a, b)) == 0.0:
        return float(2.0 * manifold.inner(a, np.subtract(X1, X2), np.subtract(Y1, Y2)))
    seg = GeodesicSegment(manifold, a, b)
    hess_r = second_variation(seg, X1, X2, Y1, Y2)
    return 2.0 * seg.length * hess_r + 2.0 * seg.dr(X1, X2) * seg.dr(Y1, Y2)


def hessian_dist_sq_second_variation(manifold: ModelManifold, a, b, X1, X2, p: float) -> float:
    """``Hess r^2(X, k_p X)`` rebuilt from the second variation of arc length."""
    Y1 = kappa_p(manifold, a, X1, p)
    Y2 = kappa_p(manifold, b, X2, p)
    seg = GeodesicSegment(manifold, a, b)
    hess_r = second_variation(seg, X1, X2, Y1, Y2)
    return 2.0 * seg.length * hess_r + 2.0 * seg.dr(X1, X2) * seg.dr(Y1, Y2)


def dist_sq(manifold: ModelManifold) -> Callable:
    def f(x, y):
        return float(manifold.distance(x, y)) ** 2

    return f


def hessian_fd_oracle(f: Callable, manifold: ModelManifold, a, b, X, Y, h: float | None = None) -> float:
    """Hessian of ``f`` on ``N x N`` from geodesic variations.

    Walk ``s`` along the geodesic with velocity ``X``, carry ``Y`` along it by
    parallel transport, shoot geodesics with velocity ``Y_s`` for time ``t``
    and take the mixed central difference in ``(s, t)``.  One Richardson step
    makes the result fourth-order in ``h``.
    """
    a, b = manifold.check(a, b)
    X1, X2 = (manifold.check(v) for v in X)
    Y1, Y2 = (manifold.check(v) for v in Y)
    if h is None:
        h = 1e-3 * max(1.0, float(manifold.distance(a, b)))
    # bilinearity: difference along unit directions, rescale afterwards
    nx = float(np.sqrt(manifold.inner(a, X1, X1) + manifold.inner(b, X2, X2)))
    ny = float(np.sqrt(manifold.inner(a, Y1, Y1) + manifold.inner(b, Y2, Y2)))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    X1, X2, Y1, Y2 = X1 / nx, X2 / nx, Y1 / ny, Y2 / ny

    def F(s, t):
        pa = manifold.exp(a, s * X1)
        pb = manifold.exp(b, s * X2)
        ya = manifold.transport(Y1, a, pa) if s != 0 else Y1
        yb = manifold.transport(Y2, b, pb) if s != 0 else Y2
        return f(manifold.exp(pa, t * ya), manifold.exp(pb, t * yb))

    def mixed(k):
        return (F(k, k) - F(k, -k) - F(-k, k) + F(-k, -k)) / (4.0 * k * k)

    return nx * ny * (4.0 * mixed(h / 2.0) - mixed(h)) / 3.0


def random_case(manifold: ModelManifold, rng: np.random.Generator, scale: float = 1.0):
    """Random ``(a, b, X1, X2)`` with ``a != b`` and ``b`` inside the injectivity domain of ``a``."""
    a = manifold.random_point(rng, scale)
    if isinstance(manifold, FlatTorus):
        step = rng.uniform(-0.4, 0.4, size=manifold.dim) * manifold.period_array
    else:
        step = manifold.random_tangent(a, rng, scale)
    b = manifold.exp(a, step)
    return a, b, manifold.random_tangent(a, rng), manifold.random_tangent(b, rng)

