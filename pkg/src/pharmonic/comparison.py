"""Numerical checks that homotopic p-harmonic maps differ by a parallel geodesic homotopy.

Given two homotopic maps ``u, v`` into a nonpositively curved model target,
the verifier lifts them to the universal cover, measures the lifted distance
field, builds the geodesic homotopy ``u_t`` and checks that the p-energy is
constant in ``t``, that ``du_t`` is parallel along the vertex geodesics, and
(for strictly negative curvature) that the images lie on one geodesic.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import FlatTorus, GeometryError, Hyperbolic
from .graph import VertexMap, p_energy
from .parabolicity import max_workers
from .report import Check
from .solver import LiftedPair, _free_mask, lift_along_homotopy, residual_norm

__all__ = [
    "Tolerances",
    "ComparisonReport",
    "CollapseVerdict",
    "verify_constant_distance",
    "build_homotopy",
    "verify_energy_constancy",
    "verify_parallel_differential",
    "verify_negative_curvature_collapse",
    "compare",
    "t_values",
]

logger = logging.getLogger(__name__)

FAMILIES = ("constant_distance", "homotopy_endpoints", "energy_constancy", "parallel_differential", "geodesic_image")


@dataclass(frozen=True)
class Tolerances:
    solver: float = 1e-8
    dist: float | None = None  # default 50 x solver
    energy: float = 1e-4
    residual: float | None = None  # default 10 x solver
    parallel: float = 1e-8
    geodesic: float = 1e-6

    def __post_init__(self):
        for name in ("solver", "dist", "energy", "residual", "parallel", "geodesic"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"tolerance {name} must be > 0")

    @property
    def tol_dist(self) -> float:
        return 50.0 * self.solver if self.dist is None else self.dist

    @property
    def tol_residual(self) -> float:
        return 10.0 * self.solver if self.residual is None else self.residual

    def to_dict(self):
        return {
            "solver": self.solver,
            "dist": self.tol_dist,
            "energy": self.energy,
            "residual": self.tol_residual,
            "parallel": self.parallel,
            "geodesic": self.geodesic,
        }


def t_values(t_grid) -> list[Fraction]:
    """An integer ``n`` gives ``n`` uniform points ``k/(n-1)``; a sequence is taken literally."""
    if isinstance(t_grid, (int, np.integer)):
        n = int(t_grid) - 1
        if n < 1:
            raise ValueError("t-grid needs at least 2 points")
        return [Fraction(k, n) for k in range(n + 1)]
    ts = sorted({Fraction(t) for t in t_grid})
    if any(t < 0 or t > 1 for t in ts):
        raise ValueError("t values must lie in [0, 1]")
    return ts


# -- distance -----------------------------------------------------------------

def verify_constant_distance(u: VertexMap, v: VertexMap, witness="auto", tol: float | None = None):
    """Lifted distance field ``r(q) = d(u~(q), v~(q))``, its spread and the lift."""
    pair = lift_along_homotopy(u, v, witness=witness)
    r = np.asarray(pair.distances(), dtype=float)
    spread = float(r.max() - r.min())
    if tol is not None and spread >= tol:
        logger.info("distance spread %.3g exceeds %.3g", spread, tol)
    return r, spread, pair


# -- homotopy -----------------------------------------------------------------

def build_homotopy(pair: LiftedPair, t_grid=11) -> list[VertexMap]:
    """Geodesic homotopy ``u_t(q) = gamma_q(t)`` with ``u_0 = u`` and ``u_1 = v`` exactly.

    Torus targets are interpolated as ``(1-t) u + t v + frac(t k) P`` with the
    integer lattice witness ``k`` and exact rational ``t``, so swapping ``u``
    and ``v`` reverses the family bit for bit.
    """
    u, v = pair.u, pair.v
    target = u.target
    ts = t_values(t_grid)
    out = []
    for t in ts:
        if t == 0:
            vals = u.values.copy()
        elif t == 1:
            vals = v.values.copy()
        elif isinstance(target, FlatTorus):
            tf, sf = float(t), float(1 - t)
            K = pair.witness
            frac = np.array([[Fraction((t.numerator * int(k)) % t.denominator, t.denominator) for k in row] for row in K], dtype=float)
            vals = target.project(sf * u.values + tf * v.values + frac * target.period_array)
        else:
            vals = target.interpolate(pair.a, pair.b, float(t), float(1 - t))
        out.append(VertexMap(u.graph, target, vals, u.p))
    return out


def verify_energy_constancy(family: list[VertexMap], bc: str = "dirichlet"):
    """Energies ``E_p(u_t)``, relative spread ``(max - min)/max`` and tension residuals."""
    free = _free_mask(family[0].graph, bc)
    workers = min(max_workers(), len(family))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        energies = list(pool.map(p_energy, family))
        residuals = list(pool.map(lambda m: residual_norm(m, free), family))
    E = np.asarray(energies)
    spread = float((E.max() - E.min()) / E.max()) if E.max() > 0 else 0.0
    return E, spread, np.asarray(residuals)


def verify_parallel_differential(family: list[VertexMap]) -> float:
    """Max over edges and consecutive ``t`` of ``|P(du_t(e)) - du_{t'}(e)|``.

    ``P`` transports along the vertex geodesic ``t -> u_t(q)``.
    """
    target = family[0].target
    g = family[0].graph
    src = g.src[: g.n_edges]
    dst = g.dst[: g.n_edges]
    defect = 0.0
    prev = family[0]
    prev_vec = target.log(prev.values[src], prev.values[dst])
    for cur in family[1:]:
        cur_vec = target.log(cur.values[src], cur.values[dst])
        moved = target.transport(prev_vec, prev.values[src], cur.values[src])
        diff = moved - cur_vec
        defect = max(defect, float(np.max(target.norm(cur.values[src], diff))))
        prev, prev_vec = cur, cur_vec
    return defect


# -- collapse -----------------------------------------------------------------

@dataclass
class CollapseVerdict:
    verdict: str  # yes / no / n.a.
    deviation: float | None
    witness_line: tuple | None
    hypotheses_hold: bool
    note: str = ""

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "deviation": self.deviation,
            "witness_line": None if self.witness_line is None else [np.asarray(x).tolist() for x in self.witness_line],
            "hypotheses_hold": self.hypotheses_hold,
            "note": self.note,
        }


def _strictly_negative(target) -> bool:
    return isinstance(target, Hyperbolic)


def verify_negative_curvature_collapse(
    u: VertexMap, v: VertexMap, tol_geo: float = 1e-6, tol_residual: float = 1e-7, bc: str = "dirichlet"
) -> CollapseVerdict:
    """Do the images of ``u`` and ``v`` lie on one geodesic?

    The candidate geodesic passes through the farthest pair of image points;
    the deviation is the largest hyperbolic distance from an image point to
    it.  Inputs that are not p-harmonic violate the hypotheses and a ``no``
    is then reported with a warning rather than as a counterexample.
    """
    target = u.target
    if not _strictly_negative(target):
        return CollapseVerdict("n.a.", None, None, False, "target is not strictly negatively curved")
    if np.array_equal(u.values, v.values):
        return CollapseVerdict("n.a.", None, None, True, "u = v: nothing to compare")
    free = _free_mask(u.graph, bc)
    hyp = residual_norm(u, free) <= tol_residual and residual_norm(v, free) <= tol_residual
    pts = np.unique(np.vstack([u.values, v.values]), axis=0)
    mink = Hyperbolic.minkowski
    gram = mink(pts[:, None, :], pts[None, :, :])
    i, j = np.unravel_index(np.argmax(-gram), gram.shape)
    P, Q = pts[i], pts[j]
    if target.distance(P, Q) == 0.0:
        return CollapseVerdict("yes", 0.0, (P, Q), hyp, "all images coincide")
    G = np.array([[mink(P, P), mink(P, Q)], [mink(Q, P), mink(Q, Q)]])
    coef = np.linalg.solve(G, np.stack([mink(pts, P), mink(pts, Q)]))
    w = pts - np.outer(coef[0], P) - np.outer(coef[1], Q)
    wn = np.sqrt(np.maximum(mink(w, w), 0.0))
    dev = float(np.max(target.radius * np.arcsinh(wn / target.radius)))
    verdict = "yes" if dev < tol_geo else "no"
    note = ""
    if verdict == "no":
        if hyp:
            note = "images leave every geodesic although both maps are p-harmonic within tolerance"
            warnings.warn("geodesic-image check failed on p-harmonic inputs: " + note, RuntimeWarning)
        else:
            note = "inputs are not p-harmonic within tolerance: hypotheses violated, result is a negative control"
            warnings.warn(note, RuntimeWarning)
    return CollapseVerdict(verdict, dev, (P, Q), hyp, note)


# -- aggregate ----------------------------------------------------------------

@dataclass
class ComparisonReport:
    distance_field: np.ndarray
    distance_spread: float
    t_grid: list
    energies: np.ndarray
    energy_spread: float
    residuals: np.ndarray
    parallel_defect: float
    endpoint_defect: float
    geodesic_image: CollapseVerdict
    tolerances: Tolerances
    checks: list = field(default_factory=list)
    pair: LiftedPair | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            "distance_field": self.distance_field.tolist(),
            "distance_spread": self.distance_spread,
            "t_grid": [float(t) for t in self.t_grid],
            "energies": self.energies.tolist(),
            "energy_spread": self.energy_spread,
            "residuals": self.residuals.tolist(),
            "parallel_defect": self.parallel_defect,
            "endpoint_defect": self.endpoint_defect,
            "geodesic_image": self.geodesic_image.to_dict(),
            "tolerances": self.tolerances.to_dict(),
        }


def compare(u: VertexMap, v: VertexMap, witness="auto", t_grid=11, tolerances: Tolerances | None = None, bc="dirichlet"):
    """Run all five check families and return a :class:`ComparisonReport`."""
    if u.target != v.target or u.p != v.p:
        raise GeometryError("u and v must share target and p")
    tol = tolerances or Tolerances()
    r, spread, pair = verify_constant_distance(u, v, witness, tol.tol_dist)
    family = build_homotopy(pair, t_grid)
    endpoint = float(max(np.abs(family[0].values - u.values).max(), np.abs(family[-1].values - v.values).max()))
    E, e_spread, res = verify_energy_constancy(family, bc)
    par = verify_parallel_differential(family)
    collapse = verify_negative_curvature_collapse(u, v, tol.geodesic, tol.tol_residual, bc)
    compact = isinstance(u.target, FlatTorus)
    checks = [
        Check("constant_distance", "distance_spread", spread, tol.tol_dist),
        Check("homotopy_endpoints", "endpoint_defect", endpoint, 0.0),
        Check("energy_constancy", "energy_spread", e_spread, tol.energy),
        Check(
            "energy_constancy",
            "homotopy_residual",
            float(res.max()),
            tol.tol_residual,
            enforced=compact,
            note="" if compact else "non-compact target: residuals of u_t are informational",
        ),
        Check("parallel_differential", "parallel_defect", par, tol.parallel),
        Check(
            "geodesic_image",
            "geodesic_deviation",
            collapse.deviation,
            tol.geodesic,
            enforced=collapse.verdict != "n.a." and collapse.hypotheses_hold,
            note=collapse.note or f"verdict {collapse.verdict}",
        ),
    ]
    return ComparisonReport(
        distance_field=r,
        distance_spread=spread,
        t_grid=t_values(t_grid),
        energies=E,
        energy_spread=e_spread,
        residuals=res,
        parallel_defect=par,
        endpoint_defect=endpoint,
        geodesic_image=collapse,
        tolerances=tol,
        checks=checks,
        pair=pair,
    )

