"""Model target manifolds with closed-form geodesic operations.

Points and tangent vectors are plain ``numpy`` arrays whose last axis holds
ambient coordinates; every operation broadcasts over leading axes.

* :class:`Euclidean` -- ``R^n`` with the flat metric.
* :class:`Hyperbolic` -- the hyperboloid ``<x, x>_M = -1/|kappa|`` in
  Minkowski space ``R^{n,1}`` (time coordinate first).
* :class:`FlatTorus` -- ``R^n`` modulo a rectangular period lattice.
* :class:`Product` -- Riemannian product of two model manifolds.

All constructible kinds have sectional curvature ``<= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

__all__ = [
    "GeometryError",
    "CutLocusError",
    "ModelManifold",
    "Euclidean",
    "Hyperbolic",
    "FlatTorus",
    "Product",
    "manifold_from_dict",
]

# relative width of the band around period/2 treated as the torus cut locus
CUT_LOCUS_RTOL = 1e-12


class GeometryError(ValueError):
    """Invalid geometric input (wrong manifold, degenerate plane, ...)."""


class CutLocusError(GeometryError):
    """Two torus points have no unique minimizing geodesic."""


class ModelManifold:
    """Common interface of the model targets."""

    dim: int

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def is_flat(self) -> bool:
        return False

    @property
    def is_simply_connected(self) -> bool:
        return True

    # -- validation -----------------------------------------------------
    def check(self, *arrays):
        """Return ``arrays`` as float arrays, raising on a shape mismatch."""
        out = []
        for x in arrays:
            x = np.asarray(x, dtype=float)
            if x.ndim == 0 or x.shape[-1] != self.ambient_dim:
                raise GeometryError(
                    f"expected trailing dimension {self.ambient_dim} for {self!r}, "
                    f"got shape {x.shape}"
                )
            out.append(x)
        return out[0] if len(out) == 1 else out

    def project(self, x):
        """Snap ambient coordinates back onto the manifold."""
        return np.asarray(x, dtype=float)

    def project_tangent(self, x, v):
        return np.asarray(v, dtype=float)

    # -- metric ---------------------------------------------------------
    def inner(self, x, u, v):
        return np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def distance(self, a, b):
        return self.norm(a, self.log(a, b))

    def geodesic(self, a, b, t):
        """Point at fraction ``t`` of the minimizing geodesic from ``a`` to ``b``."""
        a, b = self.check(a, b)
        t = np.asarray(t, dtype=float)
        if np.ndim(t) > 0:
            t = t[..., None]
        return self.exp(a, t * self.log(a, b))

    def interpolate(self, a, b, t, s=None):
        """Geodesic point with weights ``(s, t)``, ``s = 1 - t`` by default.

        Passing both weights makes ``interpolate(a, b, t, s)`` and
        ``interpolate(b, a, s, t)`` agree bit for bit where overridden.
        """
        return self.geodesic(a, b, t)

    def sectional_curvature(self, x, z, t):
        z, t = self.check(z, t)
        area = self.inner(x, z, z) * self.inner(x, t, t) - self.inner(x, z, t) ** 2
        scale = self.inner(x, z, z) * self.inner(x, t, t)
        if np.any(area <= 1e-14 * np.maximum(scale, 1e-300)):
            raise GeometryError("sectional curvature needs linearly independent vectors")
        return self.inner(x, self.curvature(x, z, t), z) / area

    # -- sampling helpers -------------------------------------------------
    def random_point(self, rng: np.random.Generator, scale: float = 1.0):
        raise NotImplementedError

    def random_tangent(self, x, rng: np.random.Generator, scale: float = 1.0):
        x = self.check(x)
        return rng.normal(scale=scale, size=self.dim) @ self.tangent_basis(x)

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(ModelManifold):
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise GeometryError("dim must be >= 1")

    @property
    def is_flat(self) -> bool:
        return True

    def log(self, a, b):
        a, b = self.check(a, b)
        return b - a

    def exp(self, a, v):
        a, v = self.check(a, v)
        return a + v

    def transport(self, v, a, b):
        return self.check(v).copy()

    def interpolate(self, a, b, t, s=None):
        a, b = self.check(a, b)
        t = float(t)
        s = 1.0 - t if s is None else float(s)
        return s * a + t * b

    def curvature(self, x, z, t):
        z, t = self.check(z, t)
        return np.zeros(np.broadcast_shapes(z.shape, t.shape))

    def tangent_basis(self, x):
        return np.eye(self.dim)

    def random_point(self, rng, scale=1.0):
        return rng.normal(scale=scale, size=self.dim)

    def to_dict(self):
        return {"kind": "euclidean", "dim": int(self.dim)}


@dataclass(frozen=True)
class Hyperbolic(ModelManifold):
    """Hyperbolic space of constant curvature ``kappa < 0`` (hyperboloid model)."""

    dim: int
    kappa: float = -1.0

    def __post_init__(self):
        if int(self.dim) < 1:
            raise GeometryError("dim must be >= 1")
        if not self.kappa < 0:
            raise GeometryError("hyperbolic curvature must be strictly negative")

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def radius(self) -> float:
        return 1.0 / math.sqrt(-self.kappa)

    @staticmethod
    def minkowski(u, v):
        u = np.asarray(u)
        v = np.asarray(v)
        return np.sum(u[..., 1:] * v[..., 1:], axis=-1) - u[..., 0] * v[..., 0]

    def inner(self, x, u, v):
        return self.minkowski(u, v)

    @property
    def origin(self):
        o = np.zeros(self.ambient_dim)
        o[0] = self.radius
        return o

    def project(self, x):
        x = np.array(x, dtype=float)
        x[..., 0] = np.sqrt(self.radius**2 + np.sum(x[..., 1:] ** 2, axis=-1))
        return x

    def project_tangent(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return v + (self.minkowski(x, v) / self.radius**2)[..., None] * x

    def distance(self, a, b):
        a, b = self.check(a, b)
        # chordal form stays accurate for nearby points where acosh does not
        diff = a - b
        chord = np.sqrt(np.maximum(self.minkowski(diff, diff), 0.0))
        R = self.radius
        return 2.0 * R * np.arcsinh(chord / (2.0 * R))

    def log(self, a, b):
        a, b = self.check(a, b)
        R = self.radius
        diff = b - a
        chord2 = np.maximum(self.minkowski(diff, diff), 0.0)
        d = 2.0 * R * np.arcsinh(np.sqrt(chord2) / (2.0 * R))
        # b + <a, b>/R^2 a, rewritten without cancellation for nearby points
        u = diff - (chord2 / (2.0 * R**2))[..., None] * a
        un = np.sqrt(np.maximum(self.minkowski(u, u), 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(un > 0, d / np.where(un > 0, un, 1.0), 1.0)
        v = scale[..., None] * u
        v = np.where((d > 0)[..., None], v, 0.0)
        return self.project_tangent(a, v)

    def exp(self, a, v):
        a, v = self.check(a, v)
        R = self.radius
        n = np.sqrt(np.maximum(self.minkowski(v, v), 0.0))
        s = n / R
        ch = np.cosh(s)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            shc = np.where(s > 1e-8, np.sinh(s) / np.where(s > 0, s, 1.0), 1.0 + s**2 / 6.0)
        out = ch * a + shc[..., None] * v
        return self.project(out)

    def transport(self, v, a, b):
        v, a, b = self.check(v, a, b)
        R = self.radius
        # v + <b, v> / (R^2 - <a, b>) (a + b), valid along the minimizing geodesic
        coef = self.minkowski(b, v) / (R**2 - self.minkowski(a, b))
        out = v + coef[..., None] * (a + b)
        return self.project_tangent(b, out)

    def interpolate(self, a, b, t, s=None):
        a, b = self.check(a, b)
        t = float(t)
        s = 1.0 - t if s is None else float(s)
        d = self.distance(a, b)[..., None] / self.radius
        small = d < 1e-8
        dd = np.where(small, 1.0, d)
        sa = np.where(small, s, np.sinh(s * dd) / np.sinh(dd))
        sb = np.where(small, t, np.sinh(t * dd) / np.sinh(dd))
        return self.project(sa * a + sb * b)

    def curvature(self, x, z, t):
        z, t = self.check(z, t)
        tt = self.minkowski(t, t)[..., None]
        zt = self.minkowski(z, t)[..., None]
        return self.kappa * (tt * z - zt * t)

    def tangent_basis(self, x):
        """Orthonormal basis of ``T_x`` obtained by boosting the origin frame."""
        x = self.check(x)
        R = self.radius
        xs = x[1:]
        basis = np.zeros((self.dim, self.ambient_dim))
        basis[:, 0] = xs / R
        basis[:, 1:] = np.eye(self.dim) + np.outer(xs, xs) / (R * (x[0] + R))
        return basis

    def random_point(self, rng, scale=1.0):
        v = np.concatenate([[0.0], rng.normal(scale=scale, size=self.dim)])
        return self.exp(self.origin, v)

    def to_dict(self):
        return {"kind": "hyperbolic", "dim": int(self.dim), "kappa": float(self.kappa)}


@dataclass(frozen=True)
class FlatTorus(ModelManifold):
    """``R^n / (P_1 Z x ... x P_n Z)``; coordinates are kept in ``[0, P_i)``."""

    periods: tuple

    def __post_init__(self):
        periods = tuple(float(p) for p in np.atleast_1d(self.periods))
        if not periods:
            raise GeometryError("dim must be >= 1")
        if any(not p > 0 for p in periods):
            raise GeometryError("torus periods must be strictly positive")
        object.__setattr__(self, "periods", periods)

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.periods)

    @property
    def is_flat(self) -> bool:
        return True

    @property
    def is_simply_connected(self) -> bool:
        return False

    @property
    def period_array(self):
        return np.asarray(self.periods)

    @property
    def cover(self) -> Euclidean:
        return Euclidean(self.dim)

    def project(self, x):
        P = self.period_array
        r = np.mod(np.asarray(x, dtype=float), P)
        return np.where(r >= P, r - P, r)

    def wrap(self, d, strict: bool = True):
        """Shortest lattice representative of a coordinate difference."""
        P = self.period_array
        d = np.asarray(d, dtype=float)
        w = d - P * np.round(d / P)
        if strict and np.any(np.abs(np.abs(w) - P / 2) <= CUT_LOCUS_RTOL * P):
            raise CutLocusError("coordinate difference at half a period: geodesic not unique")
        return w

    def distance(self, a, b):
        a, b = self.check(a, b)
        w = self.wrap(b - a, strict=False)
        return np.sqrt(np.sum(w**2, axis=-1))

    def log(self, a, b):
        a, b = self.check(a, b)
        return self.wrap(b - a)

    def exp(self, a, v):
        a, v = self.check(a, v)
        return self.project(a + v)

    def geodesic(self, a, b, t):
        a, b = self.check(a, b)
        t = np.asarray(t, dtype=float)
        if np.ndim(t) > 0:
            t = t[..., None]
        return self.project(a + t * self.log(a, b))

    def transport(self, v, a, b):
        v, a, b = self.check(v, a, b)
        self.log(a, b)
        return v.copy()

    def curvature(self, x, z, t):
        z, t = self.check(z, t)
        return np.zeros(np.broadcast_shapes(z.shape, t.shape))

    def tangent_basis(self, x):
        return np.eye(self.dim)

    def random_point(self, rng, scale=1.0):
        return self.project(rng.uniform(0.0, 1.0, size=self.dim) * self.period_array)

    def to_dict(self):
        return {"kind": "flat_torus", "dim": self.dim, "periods": list(self.periods)}


@dataclass(frozen=True)
class Product(ModelManifold):
    """Riemannian product; every operation acts factor-wise."""

    left: ModelManifold
    right: ModelManifold

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.left.dim + self.right.dim

    @property
    def ambient_dim(self) -> int:
        return self.left.ambient_dim + self.right.ambient_dim

    @property
    def is_flat(self) -> bool:
        return self.left.is_flat and self.right.is_flat

    @property
    def is_simply_connected(self) -> bool:
        return self.left.is_simply_connected and self.right.is_simply_connected

    def split(self, x):
        x = np.asarray(x, dtype=float)
        k = self.left.ambient_dim
        return x[..., :k], x[..., k:]

    def _join(self, l, r):
        return np.concatenate([l, r], axis=-1)

    def project(self, x):
        l, r = self.split(x)
        return self._join(self.left.project(l), self.right.project(r))

    def project_tangent(self, x, v):
        (xl, xr), (vl, vr) = self.split(x), self.split(v)
        return self._join(self.left.project_tangent(xl, vl), self.right.project_tangent(xr, vr))

    def inner(self, x, u, v):
        (xl, xr), (ul, ur), (vl, vr) = self.split(x), self.split(u), self.split(v)
        return self.left.inner(xl, ul, vl) + self.right.inner(xr, ur, vr)

    def distance(self, a, b):
        a, b = self.check(a, b)
        (al, ar), (bl, br) = self.split(a), self.split(b)
        return np.hypot(self.left.distance(al, bl), self.right.distance(ar, br))

    def log(self, a, b):
        a, b = self.check(a, b)
        (al, ar), (bl, br) = self.split(a), self.split(b)
        return self._join(self.left.log(al, bl), self.right.log(ar, br))

    def exp(self, a, v):
        a, v = self.check(a, v)
        (al, ar), (vl, vr) = self.split(a), self.split(v)
        return self._join(self.left.exp(al, vl), self.right.exp(ar, vr))

    def geodesic(self, a, b, t):
        a, b = self.check(a, b)
        (al, ar), (bl, br) = self.split(a), self.split(b)
        return self._join(self.left.geodesic(al, bl, t), self.right.geodesic(ar, br, t))

    def interpolate(self, a, b, t, s=None):
        a, b = self.check(a, b)
        (al, ar), (bl, br) = self.split(a), self.split(b)
        return self._join(self.left.interpolate(al, bl, t, s), self.right.interpolate(ar, br, t, s))

    def transport(self, v, a, b):
        v, a, b = self.check(v, a, b)
        (vl, vr), (al, ar), (bl, br) = self.split(v), self.split(a), self.split(b)
        return self._join(self.left.transport(vl, al, bl), self.right.transport(vr, ar, br))

    def curvature(self, x, z, t):
        z, t = self.check(z, t)
        (xl, xr), (zl, zr), (tl, tr) = self.split(x), self.split(z), self.split(t)
        return self._join(self.left.curvature(xl, zl, tl), self.right.curvature(xr, zr, tr))

    def tangent_basis(self, x):
        xl, xr = self.split(self.check(x))
        bl = self.left.tangent_basis(xl)
        br = self.right.tangent_basis(xr)
        basis = np.zeros((self.dim, self.ambient_dim))
        basis[: self.left.dim, : self.left.ambient_dim] = bl
        basis[self.left.dim :, self.left.ambient_dim :] = br
        return basis

    def random_point(self, rng, scale=1.0):
        return self._join(self.left.random_point(rng, scale), self.right.random_point(rng, scale))

    def to_dict(self):
        return {"kind": "product", "left": self.left.to_dict(), "right": self.right.to_dict()}


def manifold_from_dict(spec: dict) -> ModelManifold:
    """Build a manifold from its config-file form, e.g.
    ``{"kind": "hyperbolic", "dim": 2, "kappa": -1.0}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise GeometryError(f"manifold spec must be an object with a 'kind': {spec!r}")
    kind = str(spec["kind"]).lower().replace("-", "_")
    try:
        if kind == "euclidean":
            return Euclidean(int(spec["dim"]))
        if kind == "hyperbolic":
            return Hyperbolic(int(spec["dim"]), float(spec.get("kappa", -1.0)))
        if kind in ("flat_torus", "torus", "flattorus"):
            periods = spec.get("periods")
            if periods is None:
                periods = [1.0] * int(spec["dim"])
            elif "dim" in spec and len(periods) != int(spec["dim"]):
                raise GeometryError("torus 'periods' length differs from 'dim'")
            return FlatTorus(tuple(periods))
        if kind == "product":
            return Product(manifold_from_dict(spec["left"]), manifold_from_dict(spec["right"]))
    except KeyError as exc:
        raise GeometryError(f"manifold spec missing field {exc}") from None
    raise GeometryError(f"unknown manifold kind {spec['kind']!r}")
