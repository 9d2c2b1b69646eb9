"""scikit-learn style wrappers around the solver, capacity and comparison routines.

The "samples" here are whole maps or graphs rather than rows of a design
matrix, so the wrappers follow the estimator protocol (constructor holds
hyperparameters only, ``fit`` returns ``self``, learned state ends in ``_``)
without claiming compatibility with pipelines over arrays.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state

from ._validation import check_graph, check_p, check_pair, check_tolerance, check_vertex_map
from .comparison import Tolerances, build_homotopy, compare
from .graph import VertexMap, p_energy
from .parabolicity import parabolicity_verdict
from .solver import _free_mask, homotopy_class, minimize

__all__ = ["PHarmonicMapSolver", "PCapacity", "GeodesicHomotopy"]


class PHarmonicMapSolver(TransformerMixin, BaseEstimator):
    """Minimize the discrete p-energy starting from a given map.

    ``init`` is ``"given"`` (start from the map passed to ``fit``),
    ``"harmonic"`` (solve ``p = 2`` first, then continue in ``p``) or
    ``"random"`` (seeded random values on free vertices).
    """

    def __init__(self, p=None, bc="dirichlet", tol=1e-8, max_iter=10000, init="given", random_state=None):
        self.p = p
        self.bc = bc
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.random_state = random_state

    def _start(self, X: VertexMap) -> VertexMap:
        p = X.p if self.p is None else check_p(self.p)
        if self.init == "given":
            return VertexMap(X.graph, X.target, X.values, p)
        if self.init == "random":
            rng = check_random_state(self.random_state)
            free = _free_mask(X.graph, self.bc)
            vals = X.values.copy()
            gen = np.random.default_rng(rng.randint(2**31 - 1))
            for q in np.flatnonzero(free):
                vals[q] = X.target.random_point(gen)
            return VertexMap(X.graph, X.target, vals, p)
        if self.init == "harmonic":
            warm = minimize(VertexMap(X.graph, X.target, X.values, 2.0), self.bc, self.tol, int(self.max_iter))
            return VertexMap(X.graph, X.target, warm.map.values, p)
        raise ValueError(f"init must be 'given', 'harmonic' or 'random', got {self.init!r}")

    def fit(self, X, y=None):
        X = check_vertex_map(X)
        check_tolerance(self.tol)
        out = minimize(self._start(X), self.bc, self.tol, int(self.max_iter))
        self.map_ = out.map
        self.energy_ = p_energy(out.map)
        self.energy_trace_ = np.array(out.energy_trace, dtype=float)
        self.residual_trace_ = np.array(out.residual_trace, dtype=float)
        self.residual_ = out.residual
        self.converged_ = out.converged
        self.n_iter_ = out.iterations
        self.homotopy_class_ = homotopy_class(out.map)
        return self

    def transform(self, X):
        """Minimize ``X`` with the fitted settings and return the converged map."""
        return minimize(self._start(check_vertex_map(X)), self.bc, self.tol, int(self.max_iter)).map

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).map_


class PCapacity(BaseEstimator):
    """Capacity curve of ``K`` over the exhaustion of a graph.

    ``K`` holds vertex indices (default: the first exhaustion level);
    ``levels`` selects exhaustion levels (default: all proper ones).
    """

    def __init__(self, p=2.0, K=None, levels=None):
        self.p = p
        self.K = K
        self.levels = levels

    def fit(self, X, y=None):
        g = check_graph(X)
        p = check_p(self.p, 1.0, strict=True)
        K = g.exhaustion[0] if self.K is None else np.asarray(self.K, dtype=int)
        self.curve_ = parabolicity_verdict(g, K, p, self.levels)
        self.capacities_ = np.array([c for _, c in self.curve_.levels])
        self.levels_ = [k for k, _ in self.curve_.levels]
        self.verdict_ = self.curve_.verdict
        return self

    def predict(self, X):
        """Verdict string for a graph (or list of graphs)."""
        graphs = X if isinstance(X, (list, tuple)) else [X]
        out = [type(self)(**self.get_params()).fit(g).verdict_ for g in graphs]
        return out if isinstance(X, (list, tuple)) else out[0]


class GeodesicHomotopy(BaseEstimator):
    """Geodesic homotopy between two homotopic maps plus the comparison checks."""

    def __init__(self, t_grid=11, witness="auto", solver_tol=1e-8, energy_tol=1e-4, bc="dirichlet"):
        self.t_grid = t_grid
        self.witness = witness
        self.solver_tol = solver_tol
        self.energy_tol = energy_tol
        self.bc = bc

    def fit(self, X, y):
        """``X = u`` and ``y = v``: the two maps to compare."""
        u, v = check_pair(X, y)
        tol = Tolerances(solver=check_tolerance(self.solver_tol), energy=check_tolerance(self.energy_tol))
        self.report_ = compare(u, v, self.witness, self.t_grid, tol, self.bc)
        self.pair_ = self.report_.pair
        self.passed_ = self.report_.passed
        return self

    def transform(self, t):
        """Maps ``u_t`` for the requested ``t`` values."""
        return build_homotopy(self.pair_, list(np.atleast_1d(t)))
