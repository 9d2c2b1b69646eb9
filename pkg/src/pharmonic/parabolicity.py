"""p-capacity of exhaustions and a discrete Kelvin--Nevanlinna--Royden audit.

Capacities are computed on the graph itself::

    cap_p(K, M_k) = min { sum_e w_e |phi_a - phi_b|^p : phi = 1 on K, phi = 0 off M_k }

For the KNR audit a pair of homotopic maps ``u, v`` (lifted to the universal
cover) defines the field ``X = [d h_A o J]^#`` with ``h_A = sqrt(A + r^2)``
and ``J = (|du|^(p-2) du, |dv|^(p-2) dv)``.  A discrete vector field is a
value ``X_q(e)`` on every directed edge leaving ``q``; its divergence is the
formal adjoint of the discrete differential,

    div X(q) = (1/mu_q) sum_{q'} w_{qq'} (mu_q X_q(q->q') - mu_{q'} X_{q'}(q'->q)),

so ``sum_q mu_q eta_q div X(q) = -sum_q mu_q <d eta, X>_q`` holds exactly
and the total divergence of a closed graph telescopes to zero.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .geometry import Euclidean
from .graph import DomainGraph
from .jacobi import hessian_dist_sq
from .solver import LiftedPair

__all__ = [
    "CapacityCurve",
    "KnrAudit",
    "p_capacity",
    "parabolicity_verdict",
    "build_knr_field",
    "summation_by_parts_defect",
    "knr_limit_sweep",
    "max_workers",
]

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-13
SLOPE_THRESHOLD = -0.1
PLATEAU_RTOL = 0.01
BOUND_ATOL = 1e-10


def max_workers() -> int:
    env = os.environ.get("PHARMONIC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer PHARMONIC_THREADS=%r", env)
    return os.cpu_count() or 1


# -- capacity ---------------------------------------------------------------

def _laplacian(graph: DomainGraph, weights):
    e = graph.edges
    n = graph.n_vertices
    rows = np.r_[e[:, 0], e[:, 1], e[:, 0], e[:, 1]]
    cols = np.r_[e[:, 0], e[:, 1], e[:, 1], e[:, 0]]
    vals = np.r_[weights, weights, -weights, -weights]
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _solve_spd(A, b):
    if A.shape[0] <= 4000:
        return spl.spsolve(A.tocsc(), b)
    x, info = spl.cg(A, b, rtol=1e-14, atol=0.0, maxiter=20 * A.shape[0])
    if info != 0:
        logger.warning("CG did not converge (info=%d); falling back to a direct solve", info)
        return spl.spsolve(A.tocsc(), b)
    return x


def _capacity_energy(graph, phi, p):
    d = np.abs(phi[graph.edges[:, 0]] - phi[graph.edges[:, 1]])
    return float(np.sum(graph.weights * d**p))


def p_capacity(graph: DomainGraph, K, level: int, p: float, return_potential: bool = False):
    """Capacity of the vertex set ``K`` (indices) relative to ``graph.exhaustion[level]``.

    ``p = 2`` is a single sparse linear solve; ``p > 2`` runs damped Newton
    on the strictly convex energy, warm-started from the ``p = 2`` potential.
    """
    if p <= 1:
        raise ValueError("p must be > 1")
    K = np.unique(np.asarray(K, dtype=int))
    M = graph.exhaustion[level]
    if K.size == 0:
        raise ValueError("K must be non-empty")
    if not np.all(np.isin(K, M)):
        raise ValueError(f"K is not contained in exhaustion level {level}")
    n = graph.n_vertices
    inM = np.zeros(n, bool)
    inM[M] = True
    fixed = ~inM
    fixed[K] = True
    phi = np.zeros(n)
    phi[K] = 1.0
    free = np.flatnonzero(~fixed)
    if free.size == 0:
        warnings.warn("K fills the whole exhaustion level; capacity set to 0 by convention", RuntimeWarning)
        return (0.0, phi) if return_potential else 0.0
    if not np.any(~inM):
        # nothing outside M_k: the constant potential is admissible
        phi[:] = 1.0
        return (0.0, phi) if return_potential else 0.0

    L = _laplacian(graph, graph.weights)
    fx = np.flatnonzero(fixed)
    A = L[free][:, free]
    phi[free] = _solve_spd(A, -L[free][:, fx] @ phi[fx])
    if p != 2:
        phi = _newton_capacity(graph, phi, free, p)
    cap = _capacity_energy(graph, phi, p)
    return (cap, phi) if return_potential else cap


def _newton_capacity(graph, phi, free, p, max_iter=200):
    e = graph.edges
    w = graph.weights
    E = _capacity_energy(graph, phi, p)
    for _ in range(max_iter):
        d = phi[e[:, 0]] - phi[e[:, 1]]
        ad = np.abs(d)
        ge = p * w * ad ** (p - 2) * d
        grad = np.zeros_like(phi)
        np.add.at(grad, e[:, 0], ge)
        np.add.at(grad, e[:, 1], -ge)
        gfree = grad[free]
        gnorm = float(np.abs(gfree).max())
        if gnorm <= NEWTON_TOL * max(1.0, E):
            break
        he = p * (p - 1) * w * ad ** (p - 2)
        H = _laplacian(graph, he)[free][:, free]
        H = H + sp.identity(len(free)) * (1e-14 * max(1.0, float(he.max())))
        step = _solve_spd(H.tocsr(), -gfree)
        s = 1.0
        while s > 1e-12:
            trial = phi.copy()
            trial[free] += s * step
            E_new = _capacity_energy(graph, trial, p)
            if E_new <= E + 1e-4 * s * float(gfree @ step) or abs(E_new - E) <= 1e-15 * E:
                break
            s *= 0.5
        if E_new > E:
            break
        phi, E = trial, E_new
    return phi


@dataclass
class CapacityCurve:
    levels: list
    verdict: str
    slope: float = float("nan")
    p: float = 2.0

    def to_dict(self):
        return {
            "p": self.p,
            "levels": [{"level": int(k), "capacity": float(c)} for k, c in self.levels],
            "slope": self.slope,
            "verdict": self.verdict,
        }


def parabolicity_verdict(graph: DomainGraph, K, p: float, levels=None) -> CapacityCurve:
    """Capacity trend over exhaustion levels.

    ``levels`` defaults to every proper level containing ``K``.  The verdict
    is ``nonparabolic-trend`` when the last three capacities agree within
    1%, ``parabolic-trend`` when they decrease with log-log slope below
    -0.1, and ``inconclusive`` otherwise.  These are numerical trends, not
    proofs.
    """
    K = np.asarray(K, dtype=int)
    if levels is None:
        levels = [
            k for k, lev in enumerate(graph.exhaustion)
            if lev.size < graph.n_vertices and np.all(np.isin(K, lev)) and not np.all(np.isin(lev, K))
        ]
    levels = sorted(int(k) for k in levels)
    if len(levels) < 3:
        raise ValueError("need at least three exhaustion levels")
    with ThreadPoolExecutor(max_workers=min(max_workers(), len(levels))) as pool:
        caps = list(pool.map(lambda k: p_capacity(graph, K, k, p), levels))
    caps = np.asarray(caps)
    ks = np.asarray(levels, dtype=float) + 1.0
    pos = caps > 0
    slope = float(np.polyfit(np.log(ks[pos]), np.log(caps[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    last = caps[-3:]
    if last[-1] > 0 and np.max(np.abs(last - last[-1])) / last[-1] < PLATEAU_RTOL:
        verdict = "nonparabolic-trend"
    elif np.all(np.diff(caps) < 0) and slope < SLOPE_THRESHOLD:
        verdict = "parabolic-trend"
    else:
        verdict = "inconclusive"
    return CapacityCurve(list(zip(levels, caps.tolist())), verdict, slope, float(p))


# -- KNR field ----------------------------------------------------------------

@dataclass
class KnrAudit:
    A: float
    field_X: np.ndarray  # X_q(e) on directed edges, ordered as graph.src/dst
    x_abs: np.ndarray  # |X| per vertex
    div: np.ndarray
    div_integral: float
    neg_part_norm: float
    x_norm: float
    energy_u: np.ndarray
    energy_v: np.ndarray
    negdiv_margin: float
    flux_margin: float
    bounds_ok: bool
    p: float = 2.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "A": self.A,
            "p": self.p,
            "div_integral": self.div_integral,
            "neg_part_norm": self.neg_part_norm,
            "x_norm": self.x_norm,
            "negdiv_margin": self.negdiv_margin,
            "flux_margin": self.flux_margin,
            "bounds_ok": self.bounds_ok,
            "div": self.div.tolist(),
            "x_abs": self.x_abs.tolist(),
            "notes": list(self.notes),
        }


def _pair_data(pair: LiftedPair):
    """Per-vertex lifted distance, gradients of r^2/2 and the discrete differentials."""
    u, v = pair.u, pair.v
    g = u.graph
    target = u.target
    cover = pair.cover
    p = u.p
    r = cover.distance(pair.a, pair.b)
    # grad_u (r^2/2) = -log_u v, grad_v (r^2/2) = -log_v u, in cover coordinates
    Gu = -cover.log(pair.a, pair.b)
    Gv = -cover.log(pair.b, pair.a)
    du = target.log(u.values[g.src], u.values[g.dst])
    dv = target.log(v.values[g.src], v.values[g.dst])
    Su = u.star_norm_sq(du)
    Sv = v.star_norm_sq(dv)
    alpha = 0.5 * p - 1.0
    lu = Su**alpha
    lv = Sv**alpha
    return r, Gu, Gv, du, dv, Su, Sv, lu, lv


def build_knr_field(pair: LiftedPair, A: float) -> KnrAudit:
    """Discrete KNR field of a lifted pair and its integrability bounds.

    Checks, vertex by vertex, ``(div X)_- <= 2 A^(-1/2) (|du|^p + |dv|^p)``
    and ``|X|^(p/(p-1)) <= 2^(1/(p-1)) (|du|^p + |dv|^p)``.
    """
    if not A > 1:
        raise ValueError("A must be > 1")
    u, v = pair.u, pair.v
    if u.p != v.p:
        raise ValueError("u and v must share p")
    g = u.graph
    p = u.p
    cover = pair.cover
    r, Gu, Gv, du, dv, Su, Sv, lu, lv = _pair_data(pair)
    src, dst = g.src, g.dst
    inner_u = cover.inner(pair.a[src], Gu[src], du)
    inner_v = cover.inner(pair.b[src], Gv[src], dv)
    X = (lu[src] * inner_u + lv[src] * inner_v) / np.sqrt(A + r[src] ** 2)

    x_abs = np.sqrt(np.bincount(src, weights=g.w2 * X**2, minlength=g.n_vertices))
    # reverse-edge lookup: directed edge k and k +- m are opposite
    m = g.n_edges
    rev = np.r_[np.arange(m, 2 * m), np.arange(m)]
    flux = g.mu[src] * X - g.mu[dst] * X[rev]
    div = np.bincount(src, weights=g.w2 * flux, minlength=g.n_vertices) / g.mu

    eu = Su ** (0.5 * p)
    ev = Sv ** (0.5 * p)
    neg = np.maximum(-div, 0.0)
    negdiv = 2.0 * A**-0.5 * (eu + ev) - neg
    flux = 2.0 ** (1.0 / (p - 1.0)) * (eu + ev) - x_abs ** (p / (p - 1.0))
    div_integral = float(np.dot(g.mu, div))
    notes = []
    if g.has_boundary:
        notes.append("graph has boundary vertices: total divergence equals the boundary flux, not zero")
    return KnrAudit(
        A=float(A),
        field_X=X,
        x_abs=x_abs,
        div=div,
        div_integral=div_integral,
        neg_part_norm=float(np.dot(g.mu, neg)),
        x_norm=float(np.dot(g.mu, x_abs ** (p / (p - 1.0))) ** ((p - 1.0) / p)),
        energy_u=eu,
        energy_v=ev,
        negdiv_margin=float(negdiv.min()),
        flux_margin=float(flux.min()),
        bounds_ok=bool(negdiv.min() >= -BOUND_ATOL and flux.min() >= -BOUND_ATOL),
        p=float(p),
        notes=notes,
    )


def summation_by_parts_defect(audit: KnrAudit, graph: DomainGraph, eta) -> float:
    """``|sum mu eta div X + sum mu <d eta, X>|`` for a test function ``eta``.

    Zero up to roundoff: the discrete divergence is the adjoint of ``d``.
    """
    eta = np.asarray(eta, dtype=float)
    lhs = float(np.dot(graph.mu * eta, audit.div))
    deta = eta[graph.dst] - eta[graph.src]
    pairing = np.bincount(graph.src, weights=graph.w2 * deta * audit.field_X, minlength=graph.n_vertices)
    return abs(lhs + float(np.dot(graph.mu, pairing)))


def _vertex_terms(pair: LiftedPair):
    """Per-vertex ``tr Hess r^2(dj, J)`` and ``tr[dr(dj) dr(J)]``."""
    u = pair.u
    g = u.graph
    cover = pair.cover
    r, Gu, Gv, du, dv, Su, Sv, lu, lv = _pair_data(pair)
    src = g.src
    H = np.zeros(g.n_vertices)
    B = np.zeros(g.n_vertices)
    flat = isinstance(cover, Euclidean)
    for k in range(len(src)):
        q = src[k]
        X = (du[k], dv[k])
        Y = (lu[q] * du[k], lv[q] * dv[k])
        if flat:
            h = 2.0 * float(np.dot(X[0] - X[1], Y[0] - Y[1]))
        else:
            h = hessian_dist_sq(cover, pair.a[q], pair.b[q], X, Y)
        H[q] += g.w2[k] * h
        if r[q] > 0:
            # dr(X1, X2) = -<X1, e_a> + <X2, e_b>, e_a unit towards b, e_b unit away from a
            ea = -Gu[q] / r[q]
            eb = Gv[q] / r[q]
            drx = -cover.inner(pair.a[q], X[0], ea) + cover.inner(pair.b[q], X[1], eb)
            dry = -cover.inner(pair.a[q], Y[0], ea) + cover.inner(pair.b[q], Y[1], eb)
            B[q] += g.w2[k] * drx * dry
    return r, H, B, Su ** (0.5 * u.p), Sv ** (0.5 * u.p)


def knr_limit_sweep(pair: LiftedPair, T_list, A_list=None, rtol: float = 1e-9) -> dict:
    """Tabulate the ``A -> infinity`` argument on the sublevel split ``M_T / M^T``.

    For every ``(T, A)`` the row holds the weighted integral of the
    Hessian pairing on ``M_T = {r <= T}`` and each side of the inequality
    chain that bounds it; ``failed`` lists the inequalities that do not hold
    (within ``rtol`` relative slack).  ``A`` defaults to ``max(2, T^2)``.
    On a finite graph every sublevel set is compact, so the sweep checks
    consistency rather than a genuine limit.
    """
    g = pair.u.graph
    mu = g.mu
    r, H, B, eu, ev = _vertex_terms(pair)
    e = eu + ev
    rows = []
    cells = []
    for T in sorted(float(t) for t in T_list):
        As = [max(2.0, T * T)] if A_list is None else sorted(float(a) for a in A_list)
        cells.extend((T, A) for A in As)
    for T, A in cells:
        inside = r <= T
        root = np.sqrt(A + r**2)
        lhs = float(np.sum(mu * r**2 / root**3 * B))
        mid = float(np.sum(mu * H / (2.0 * root)))
        mt_part = float(np.sum((mu * H / (2.0 * root))[inside]))
        I_T = float(np.sum((mu * H)[inside]))
        lower = I_T / (2.0 * np.sqrt(A + T * T))
        rhs7 = T * T / (A + T * T) ** 1.5 * float(np.sum(2 * (mu * e)[inside])) + float(
            np.sum(2 * (mu * e)[~inside])
        ) / np.sqrt(A + T * T)
        bound_IT = 4 * T * T / (A + T * T) * float(np.sum((mu * e)[inside])) + 4 * float(np.sum((mu * e)[~inside]))
        scale = max(1.0, float(np.sum(mu * e)))
        slack = rtol * scale
        failed = []
        if lhs < mid - slack:
            failed.append("divergence_sign")
        if mid < mt_part - slack:
            failed.append("outer_nonnegative")
        if mt_part < lower - slack or lower < -slack:
            failed.append("inner_lower_bound")
        if lhs > rhs7 + slack:
            failed.append("split_upper_bound")
        if I_T > bound_IT + slack:
            failed.append("inner_integral_bound")
        rows.append(
            {
                "T": T,
                "A": A,
                "A_admissible": bool(A > T * T / 2.0),
                "inner_integral": I_T,
                "lhs": lhs,
                "weighted_integral": mid,
                "inner_weighted": mt_part,
                "inner_lower": lower,
                "split_rhs": rhs7,
                "inner_bound": bound_IT,
                "failed": failed,
            }
        )
    return {
        "rows": rows,
        "total_hessian_integral": float(np.dot(mu, H)),
        "min_vertex_hessian": float(H.min()),
        "note": "finite graph: every sublevel set is compact, so the T-sweep is a consistency check",
    }
