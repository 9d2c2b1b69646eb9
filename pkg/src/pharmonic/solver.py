"""Discrete p-tension and p-energy descent within a homotopy class."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import CutLocusError, FlatTorus, GeometryError, ModelManifold
from .graph import DomainGraph, VertexMap, p_energy

__all__ = [
    "SolverError",
    "HomotopyClass",
    "SolveOutcome",
    "LiftedPair",
    "energy_gradient",
    "tension_residual",
    "residual_norm",
    "minimize",
    "homotopy_class",
    "lift_along_homotopy",
]

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
# relative energy change below which Armijo cannot be resolved in floating point
ENERGY_ROUNDOFF = 1e-14
# largest per-vertex displacement as a fraction of the smallest torus period
TORUS_STEP_CAP = 0.45 * 0.5


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class HomotopyClass:
    """Winding numbers per generator and torus axis; empty for simply connected targets."""

    target: ModelManifold
    windings: tuple = ()

    def to_dict(self):
        return {"target": self.target.to_dict(), "windings": [list(w) for w in self.windings]}


@dataclass
class SolveOutcome:
    map: VertexMap
    energy_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    residual: float = np.inf
    converged: bool = False
    iterations: int = 0


def _coefficients(m: VertexMap, values, edge_vecs):
    g = m.graph
    d2 = m.target.inner(values[g.src], edge_vecs, edge_vecs)
    S = np.bincount(g.src, weights=g.w2 * d2, minlength=g.n_vertices)
    alpha = 0.5 * m.p - 1.0
    weighted = g.mu * S**alpha
    return S, weighted[g.src] + weighted[g.dst]


def _energy(m: VertexMap, values) -> float:
    g = m.graph
    d2 = m.target.distance(values[g.src], values[g.dst]) ** 2
    S = np.bincount(g.src, weights=g.w2 * d2, minlength=g.n_vertices)
    return float(np.dot(g.mu, S ** (0.5 * m.p)) / m.p)


def energy_gradient(m: VertexMap, values=None):
    """Riemannian gradient of ``E_p`` with respect to every vertex value.

    ``grad_q E = -sum_{q'} w_{qq'} (mu_q S_q^a + mu_{q'} S_{q'}^a) log_{u(q)} u(q')``
    with ``a = p/2 - 1``.
    """
    values = m.values if values is None else values
    g = m.graph
    L = m.target.log(values[g.src], values[g.dst])
    _, coef = _coefficients(m, values, L)
    contrib = -(g.w2 * coef)[:, None] * L
    grad = np.zeros_like(values)
    np.add.at(grad, g.src, contrib)
    return grad


def tension_residual(m: VertexMap, q: int | None = None):
    """Discrete p-tension: the negative energy gradient at ``q`` (all vertices if None)."""
    tau = -energy_gradient(m)
    return tau if q is None else tau[q]


def residual_norm(m: VertexMap, free=None) -> float:
    """Sup over ``free`` vertices of ``|tau_p|`` (interior vertices by default)."""
    tau = tension_residual(m)
    if free is None:
        free = ~m.graph.boundary
    norms = m.target.norm(m.values, tau)[free]
    return float(norms.max()) if norms.size else 0.0


def _free_mask(graph: DomainGraph, bc: str):
    if bc not in ("dirichlet", "free"):
        raise ValueError(f"bc must be 'dirichlet' or 'free', got {bc!r}")
    if bc == "free" or not graph.has_boundary:
        return np.ones(graph.n_vertices, dtype=bool)
    return ~graph.boundary


def _sq_norm(target, x, v) -> float:
    return float(np.sum(target.inner(x, v, v)))


def _edge_increments(target, values, g):
    return target.log(values[g.src[: g.n_edges]], values[g.dst[: g.n_edges]])


def minimize(
    initial: VertexMap,
    bc: str = "dirichlet",
    tol: float = 1e-8,
    max_iters: int = 10000,
) -> SolveOutcome:
    """Riemannian gradient descent on ``E_p`` with Armijo backtracking.

    Vertex values move by ``exp``; fixed (Dirichlet) vertices never move.
    Trial steps come from a Barzilai--Borwein estimate and are halved until
    the Armijo condition holds, so the energy trace is non-increasing.  On a
    torus every accepted step keeps each edge increment on the same lattice
    branch, which preserves the homotopy class.
    """
    m = initial
    target, g = m.target, m.graph
    free = _free_mask(g, bc)
    torus = isinstance(target, FlatTorus)
    x = m.values.copy()
    E = _energy(m, x)
    grad = energy_gradient(m, x)
    grad[~free] = 0.0
    res = float(target.norm(x, grad)[free].max()) if free.any() else 0.0
    out = SolveOutcome(map=m, energy_trace=[(0, E)], residual_trace=[(0, res)], residual=res)
    if torus:
        cap = TORUS_STEP_CAP * float(min(target.periods))
        inc = _edge_increments(target, x, g)
    else:
        scale = float(target.distance(x[g.src], x[g.dst]).max()) if g.n_edges else 1.0
        cap = 10.0 * max(1.0, scale)

    step = None
    prev = None
    it = 0
    while res >= tol and it < max_iters:
        d = -grad
        dn2 = _sq_norm(target, x, d)
        dmax = float(target.norm(x, d).max())
        if step is None:
            coef_max = float(np.max(_coefficients(m, x, target.log(x[g.src], x[g.dst]))[1] * g.w2)) if g.n_edges else 1.0
            step = 1.0 / max(coef_max * g.degree().max(), 1e-300)
        elif prev is not None:
            sx, dg = prev
            sy = float(np.sum(sx * dg))
            step = float(np.sum(sx * sx)) / sy if sy > 0 else 2.0 * step
        s = min(step, cap / dmax) if dmax > 0 else step
        accepted = False
        while s * dmax > 1e-300:
            trial = target.exp(x, s * d)
            if torus:
                new_inc = _edge_increments(target, trial, g)
                expected = inc + (s * d)[g.dst[: g.n_edges]] - (s * d)[g.src[: g.n_edges]]
                if np.any(np.abs(new_inc - expected) > 1e-9 * max(target.periods)):
                    s *= BACKTRACK
                    continue
            E_new = _energy(m, trial)
            decrease = ARMIJO_C * s * dn2
            if decrease > ENERGY_ROUNDOFF * max(1.0, abs(E)):
                ok = E_new <= E - decrease
            else:
                # energy differences are below roundoff: require a smaller gradient instead.
                # The 2-norm (not the sup) is what a short step provably decreases.
                g_try = energy_gradient(m, trial)
                g_try[~free] = 0.0
                ok = E_new <= E + ENERGY_ROUNDOFF * max(1.0, abs(E)) and _sq_norm(target, trial, g_try) < dn2
            if ok:
                accepted = True
                break
            s *= BACKTRACK
        if not accepted:
            logger.debug("line search stalled at iteration %d (residual %.3e)", it, res)
            break
        it += 1
        new_grad = energy_gradient(m, trial)
        new_grad[~free] = 0.0
        prev = (s * d, new_grad - grad)
        if torus:
            inc = _edge_increments(target, trial, g)
        x, grad = trial, new_grad
        E = min(E_new, E)
        res = float(target.norm(x, grad)[free].max())
        step = s
        out.energy_trace.append((it, E_new))
        out.residual_trace.append((it, res))

    out.map = m.with_values(x)
    out.iterations = it
    out.residual = res
    out.converged = res < tol
    return out


# -- homotopy bookkeeping -----------------------------------------------------

def homotopy_class(m: VertexMap) -> HomotopyClass:
    """Winding data of ``m`` along the graph generators.

    For a flat torus the winding of a generator is the sum of the shortest
    edge increments around the cycle divided by the periods (an integer
    vector).  Simply connected targets have a single class.
    """
    target = m.target
    if target.is_simply_connected:
        return HomotopyClass(target, ())
    if not isinstance(target, FlatTorus):
        raise GeometryError("homotopy classes are only computed for flat tori and simply connected targets")
    P = target.period_array
    windings = []
    for gi, cyc in enumerate(m.graph.generators):
        idx = np.asarray(cyc)
        nxt = np.roll(idx, -1)
        try:
            inc = target.wrap(m.values[nxt] - m.values[idx])
        except CutLocusError:
            raise CutLocusError(f"generator {gi} has an edge at the cut locus; winding is ambiguous") from None
        w = inc.sum(axis=0) / P
        r = np.round(w)
        if np.any(np.abs(w - r) > 1e-8):
            raise GeometryError(f"generator {gi}: non-integral winding {w}")
        windings.append(tuple(int(k) for k in r))
    return HomotopyClass(target, tuple(windings))


@dataclass
class LiftedPair:
    """Per-vertex representatives ``(u~(q), v~(q))`` in the universal cover.

    For a torus ``a[q]`` is ``u(q)`` and ``b[q] = u(q) + offset[q]`` with the
    displacement field ``offset`` continuous along every edge; ``witness``
    holds the integer lattice shifts with ``b = v + witness * P``.
    """

    u: VertexMap
    v: VertexMap
    cover: ModelManifold
    a: np.ndarray
    b: np.ndarray
    witness: np.ndarray | None = None

    def distances(self):
        return self.cover.distance(self.a, self.b)

    def project(self, points):
        return self.u.target.project(points)


def lift_along_homotopy(u: VertexMap, v: VertexMap, witness="auto", base: int = 0) -> LiftedPair:
    """Lift a homotopic pair consistently to the universal cover of the target.

    ``witness`` is ``"auto"`` (displacement propagated breadth-first from
    ``base``) or an integer array ``(n, dim)`` of lattice shifts applied to
    ``v``.
    """
    if u.graph is not v.graph and u.graph.n_vertices != v.graph.n_vertices:
        raise GeometryError("maps live on different graphs")
    if u.target != v.target:
        raise GeometryError("maps have different targets")
    cu, cv = homotopy_class(u), homotopy_class(v)
    if cu.windings != cv.windings:
        raise GeometryError(f"homotopy class mismatch: {cu.windings} vs {cv.windings}")
    target = u.target
    if target.is_simply_connected:
        return LiftedPair(u, v, target, u.values.copy(), v.values.copy(), None)

    g = u.graph
    P = target.period_array
    e = g.edges
    du = target.wrap(u.values[e[:, 1]] - u.values[e[:, 0]], strict=False)
    dv = target.wrap(v.values[e[:, 1]] - v.values[e[:, 0]], strict=False)
    jump = dv - du
    if isinstance(witness, str):
        if witness != "auto":
            raise ValueError("witness must be 'auto' or an integer offset array")
        D = np.full((g.n_vertices, target.dim), np.nan)
        D[base] = target.wrap(v.values[base] - u.values[base])
        nbrs = [[] for _ in range(g.n_vertices)]
        for k, (a, b) in enumerate(e.tolist()):
            nbrs[a].append((b, k, 1.0))
            nbrs[b].append((a, k, -1.0))
        queue = deque([base])
        seen = np.zeros(g.n_vertices, bool)
        seen[base] = True
        while queue:
            q = queue.popleft()
            for r, k, sign in nbrs[q]:
                if not seen[r]:
                    D[r] = D[q] + sign * jump[k]
                    seen[r] = True
                    queue.append(r)
        bad = np.abs(D[e[:, 1]] - D[e[:, 0]] - jump).max(axis=1) > 1e-9 * P.max()
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise GeometryError(
                f"inconsistent lift across edge ({g.ids[e[k, 0]]}, {g.ids[e[k, 1]]}): classes differ"
            )
        b_pts = u.values + D
        wit = np.round((b_pts - v.values) / P).astype(int)
    else:
        wit = np.asarray(witness, dtype=int).reshape(g.n_vertices, target.dim)
        b_pts = v.values + wit * P
        D = b_pts - u.values
        bad = np.abs(D[e[:, 1]] - D[e[:, 0]] - jump).max(axis=1) > 1e-9 * P.max()
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise GeometryError(f"witness inconsistent on edge ({g.ids[e[k, 0]]}, {g.ids[e[k, 1]]})")
    return LiftedPair(u, v, target.cover, u.values.copy(), b_pts, wit)
