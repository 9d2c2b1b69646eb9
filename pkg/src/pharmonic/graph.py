"""Weighted domain graphs, vertex maps and their discrete p-energy.

The discrete differential of a map ``u`` at a vertex ``q`` is the family of
edge vectors ``log_{u(q)} u(q')`` over the neighbours ``q'``; its squared
Hilbert--Schmidt norm is ``S_q = sum_{q'} w_{qq'} d(u(q), u(q'))^2`` and the
energy density is ``e_p(q) = S_q^{p/2}``.  The p-energy is
``E_p = (1/p) sum_q mu_q e_p(q)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import GeometryError, Hyperbolic, ModelManifold, manifold_from_dict

__all__ = [
    "GraphLoadError",
    "DomainGraph",
    "VertexMap",
    "energy_density",
    "p_energy",
    "load_graph",
    "builtin_graph",
    "resolve_graph",
    "load_vertex_map",
]


class GraphLoadError(ValueError):
    """Schema or invariant violation while reading a graph or map."""


@dataclass(eq=False)
class DomainGraph:
    """Finite connected weighted graph with vertex measures.

    Vertices are addressed by position ``0..n-1``; ``ids`` keeps the external
    labels used in files.  ``generators`` are closed walks (index lists, the
    closing edge implied) and ``exhaustion`` nested connected index sets.
    """

    ids: list
    mu: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    boundary: np.ndarray
    generators: list = field(default_factory=list)
    exhaustion: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        if not self.exhaustion:
            self.exhaustion = [np.arange(self.n_vertices)]
        self.exhaustion = [np.unique(np.asarray(level, dtype=int)) for level in self.exhaustion]
        self.generators = [list(map(int, g)) for g in self.generators]
        self._validate()
        e = self.edges
        self.src = np.concatenate([e[:, 0], e[:, 1]])
        self.dst = np.concatenate([e[:, 1], e[:, 0]])
        self.w2 = np.concatenate([self.weights, self.weights])
        self.index = {vid: i for i, vid in enumerate(self.ids)}

    @property
    def n_vertices(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def has_boundary(self) -> bool:
        return bool(self.boundary.any())

    def _validate(self):
        n = self.n_vertices
        if n == 0:
            raise GraphLoadError("graph has no vertices")
        if len(set(self.ids)) != n:
            raise GraphLoadError("duplicate vertex ids")
        if self.mu.shape != (n,) or np.any(~(self.mu > 0)):
            raise GraphLoadError("vertex measures must be strictly positive")
        if len(self.weights) != len(self.edges) or np.any(~(self.weights > 0)):
            raise GraphLoadError("edge weights must be strictly positive")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise GraphLoadError("edge references a missing vertex")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise GraphLoadError("self-loops are not allowed")
        if not self.is_connected():
            raise GraphLoadError("graph is disconnected")
        adj = self.edge_lookup()
        for gi, g in enumerate(self.generators):
            if len(g) < 2:
                raise GraphLoadError(f"generators[{gi}]: a closed walk needs at least two vertices")
            if g[0] == g[-1]:
                g.pop()
            for a, b in zip(g, g[1:] + g[:1]):
                if (min(a, b), max(a, b)) not in adj:
                    raise GraphLoadError(f"generators[{gi}]: no edge between {self.ids[a]} and {self.ids[b]}")
        prev = None
        for k, level in enumerate(self.exhaustion):
            if level.size == 0 or level.min() < 0 or level.max() >= n:
                raise GraphLoadError(f"exhaustion[{k}]: empty or references a missing vertex")
            if prev is not None and not np.all(np.isin(prev, level)):
                raise GraphLoadError(f"exhaustion[{k}] does not contain exhaustion[{k - 1}]")
            if not self.is_connected(level):
                raise GraphLoadError(f"exhaustion[{k}] induces a disconnected subgraph")
            prev = level
        if prev.size != n:
            raise GraphLoadError("exhaustion does not cover every vertex")

    def edge_lookup(self) -> dict:
        return {(min(a, b), max(a, b)): i for i, (a, b) in enumerate(self.edges.tolist())}

    def is_connected(self, subset=None) -> bool:
        n = self.n_vertices
        e = self.edges
        if subset is not None:
            mask = np.zeros(n, dtype=bool)
            mask[subset] = True
            e = e[mask[e[:, 0]] & mask[e[:, 1]]]
            keep = np.flatnonzero(mask)
        else:
            keep = np.arange(n)
        if keep.size <= 1:
            return True
        A = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        A = A.tocsr()[keep][:, keep]
        ncomp, _ = connected_components(A, directed=False)
        return ncomp == 1

    def degree(self):
        return np.bincount(self.src, minlength=self.n_vertices)

    def indices(self, ids: Iterable) -> np.ndarray:
        try:
            return np.array([self.index[i] for i in ids], dtype=int)
        except KeyError as exc:
            raise GraphLoadError(f"unknown vertex id {exc}") from None

    def permuted(self, perm) -> "DomainGraph":
        """Relabel vertex ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=int)
        inv = np.argsort(perm)
        return DomainGraph(
            ids=[self.ids[j] for j in inv],
            mu=self.mu[inv],
            edges=perm[self.edges],
            weights=self.weights,
            boundary=self.boundary[inv],
            generators=[perm[g].tolist() for g in map(np.asarray, self.generators)],
            exhaustion=[perm[level] for level in self.exhaustion],
            name=self.name,
        )

    def to_dict(self) -> dict:
        return {
            "vertices": [
                {"id": vid, "mu": float(m), "boundary": bool(b)}
                for vid, m, b in zip(self.ids, self.mu, self.boundary)
            ],
            "edges": [
                {"a": self.ids[a], "b": self.ids[b], "w": float(w)}
                for (a, b), w in zip(self.edges.tolist(), self.weights)
            ],
            "generators": [[self.ids[i] for i in g] for g in self.generators],
            "exhaustion": [[self.ids[i] for i in level] for level in self.exhaustion],
        }


@dataclass(eq=False)
class VertexMap:
    """Assignment of a target point to every vertex, with exponent ``p``."""

    graph: DomainGraph
    target: ModelManifold
    values: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        if not self.p >= 2:
            raise GeometryError(f"p must be >= 2, got {self.p}")
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1 and self.target.ambient_dim == 1:
            vals = vals[:, None]
        if vals.shape != (self.graph.n_vertices, self.target.ambient_dim):
            raise GeometryError(
                f"values must have shape ({self.graph.n_vertices}, {self.target.ambient_dim}), got {vals.shape}"
            )
        if isinstance(self.target, Hyperbolic):
            norm = Hyperbolic.minkowski(vals, vals)
            R2 = self.target.radius**2
            if np.any(np.abs(norm + R2) > 1e-6 * max(1.0, R2)) or np.any(vals[:, 0] <= 0):
                raise GeometryError("values do not lie on the hyperboloid")
        self.values = self.target.project(vals)

    def with_values(self, values) -> "VertexMap":
        return VertexMap(self.graph, self.target, values, self.p)

    def edge_vectors(self):
        """``log_{u(a)} u(b)`` for every directed edge (``graph.src -> graph.dst``)."""
        g = self.graph
        return self.target.log(self.values[g.src], self.values[g.dst])

    def star_norm_sq(self, edge_vectors=None):
        """``S_q = sum_{q'} w_{qq'} |log_{u(q)} u(q')|^2`` per vertex."""
        g = self.graph
        if edge_vectors is None:
            d2 = self.target.distance(self.values[g.src], self.values[g.dst]) ** 2
        else:
            d2 = self.target.inner(self.values[g.src], edge_vectors, edge_vectors)
        return np.bincount(g.src, weights=g.w2 * d2, minlength=g.n_vertices)

    def to_dict(self, include_graph: bool = False) -> dict:
        out: dict[str, Any] = {
            "target": self.target.to_dict(),
            "p": float(self.p),
            "values": self.values.tolist(),
        }
        if include_graph:
            out["graph"] = self.graph.to_dict()
        return out


def energy_density(m: VertexMap, q: int | None = None):
    """``|du|^p`` at vertex ``q`` (all vertices when ``q`` is None)."""
    dens = m.star_norm_sq() ** (0.5 * m.p)
    return dens if q is None else float(dens[q])


def p_energy(m: VertexMap, region=None) -> float:
    """``(1/p) sum_{q in region} mu_q e_p(q)``; ``region`` defaults to all vertices."""
    dens = energy_density(m)
    if region is None:
        return float(np.dot(m.graph.mu, dens) / m.p)
    region = np.asarray(list(region), dtype=int)
    if region.size == 0:
        return 0.0
    return float(np.dot(m.graph.mu[region], dens[region]) / m.p)


# -- construction -----------------------------------------------------------

def _read_json(source) -> Any:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("utf-8")
    if isinstance(source, str):
        try:
            return json.loads(source)
        except json.JSONDecodeError as exc:
            raise GraphLoadError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return source


def graph_from_dict(doc: dict) -> DomainGraph:
    if not isinstance(doc, dict):
        raise GraphLoadError("graph document must be a JSON object")
    verts = doc.get("vertices")
    if not isinstance(verts, list) or not verts:
        raise GraphLoadError("'vertices' must be a non-empty list")
    ids, mu, bnd = [], [], []
    for i, v in enumerate(verts):
        if not isinstance(v, dict) or "id" not in v:
            raise GraphLoadError(f"vertices[{i}]: missing 'id'")
        ids.append(v["id"])
        m = v.get("mu", 1.0)
        if not isinstance(m, (int, float)) or not m > 0:
            raise GraphLoadError(f"vertices[{i}].mu: must be a positive number")
        mu.append(float(m))
        bnd.append(bool(v.get("boundary", False)))
    if len(set(map(repr, ids))) != len(ids):
        raise GraphLoadError("duplicate vertex ids")
    index = {vid: i for i, vid in enumerate(ids)}
    edges, weights = [], []
    for i, e in enumerate(doc.get("edges", [])):
        if not isinstance(e, dict) or "a" not in e or "b" not in e:
            raise GraphLoadError(f"edges[{i}]: needs 'a' and 'b'")
        for key in ("a", "b"):
            if e[key] not in index:
                raise GraphLoadError(f"edges[{i}].{key}: unknown vertex {e[key]!r}")
        w = e.get("w", 1.0)
        if not isinstance(w, (int, float)) or not w > 0:
            raise GraphLoadError(f"edges[{i}].w: must be a positive number")
        edges.append((index[e["a"]], index[e["b"]]))
        weights.append(float(w))

    def resolve(lists, what):
        out = []
        for k, lst in enumerate(lists or []):
            try:
                out.append([index[x] for x in lst])
            except (KeyError, TypeError):
                raise GraphLoadError(f"{what}[{k}]: unknown vertex id") from None
        return out

    return DomainGraph(
        ids=ids,
        mu=mu,
        edges=np.array(edges, dtype=int).reshape(-1, 2),
        weights=weights,
        boundary=bnd,
        generators=resolve(doc.get("generators"), "generators"),
        exhaustion=resolve(doc.get("exhaustion"), "exhaustion"),
        name=str(doc.get("name", "")),
    )


def load_graph(source) -> DomainGraph:
    """Read a graph from JSON text, bytes, a file object or a parsed dict."""
    return graph_from_dict(_read_json(source))


def _chebyshev_levels(coords, center, radii):
    dist = np.abs(coords - center).max(axis=1)
    return [np.flatnonzero(dist <= r) for r in radii]


def _grid(shape, periodic=False):
    shape = tuple(shape)
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    edges = []
    for ax in range(len(shape)):
        if periodic:
            nb = np.roll(idx, -1, axis=ax)
            edges.append(np.stack([idx.ravel(), nb.ravel()], axis=1))
        else:
            sl_a = [slice(None)] * len(shape)
            sl_b = [slice(None)] * len(shape)
            sl_a[ax] = slice(0, -1)
            sl_b[ax] = slice(1, None)
            edges.append(np.stack([idx[tuple(sl_a)].ravel(), idx[tuple(sl_b)].ravel()], axis=1))
    coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
    return idx, np.concatenate(edges), coords


def builtin_graph(name: str, n: int) -> DomainGraph:
    """Standard families.

    ``path(n)`` and ``cycle(n)`` have ``n`` vertices; ``grid2d(n)``,
    ``grid3d(n)`` and ``torus_grid(n)`` have side ``n``.  Open families mark
    their outer vertices as boundary; exhaustions grow from vertex 0 (path,
    cycle) or from the centre (grids, by Chebyshev balls).  ``torus_grid``
    carries the two axis cycles through vertex 0 as generators.
    """
    n = int(n)
    name = name.lower()
    if name == "path":
        if n < 2:
            raise GraphLoadError("path needs n >= 2")
        edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
        bnd = np.zeros(n, bool)
        bnd[[0, -1]] = True
        levels = [np.arange(k + 1) for k in range(1, n)]
        return DomainGraph(list(range(n)), np.ones(n), edges, np.ones(n - 1), bnd, [], levels, f"path({n})")
    if name == "cycle":
        if n < 3:
            raise GraphLoadError("cycle needs n >= 3")
        edges = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
        levels = [np.arange(k + 1) for k in range(1, n)]
        return DomainGraph(
            list(range(n)), np.ones(n), edges, np.ones(n), np.zeros(n, bool), [list(range(n))], levels, f"cycle({n})"
        )
    if name in ("grid2d", "grid3d"):
        d = 2 if name == "grid2d" else 3
        if n < 2:
            raise GraphLoadError(f"{name} needs n >= 2")
        _, edges, coords = _grid((n,) * d)
        center = (n - 1) / 2.0
        bnd = np.any((coords == 0) | (coords == n - 1), axis=1)
        radii = [r + (0.5 if n % 2 == 0 else 0.0) for r in range((n + 1) // 2)]
        levels = _chebyshev_levels(coords, center, radii)
        nv = n**d
        return DomainGraph(list(range(nv)), np.ones(nv), edges, np.ones(len(edges)), bnd, [], levels, f"{name}({n})")
    if name == "torus_grid":
        if n < 3:
            raise GraphLoadError("torus_grid needs n >= 3")
        idx, edges, coords = _grid((n, n), periodic=True)
        gens = [idx[:, 0].tolist(), idx[0, :].tolist()]
        center = (n - 1) / 2.0
        radii = [r + (0.5 if n % 2 == 0 else 0.0) for r in range((n + 1) // 2)]
        levels = _chebyshev_levels(coords, center, radii)
        return DomainGraph(
            list(range(n * n)), np.ones(n * n), edges, np.ones(len(edges)), np.zeros(n * n, bool), gens, levels,
            f"torus_grid({n})",
        )
    raise GraphLoadError(f"unknown builtin graph {name!r}")


def resolve_graph(spec: str) -> DomainGraph:
    """``builtin:NAME:N`` or a path to a graph JSON file."""
    if spec.startswith("builtin:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise GraphLoadError("builtin graph spec must look like builtin:NAME:N")
        try:
            return builtin_graph(parts[1], int(parts[2]))
        except ValueError as exc:
            raise GraphLoadError(str(exc)) from None
    try:
        with open(spec, "rb") as fh:
            return load_graph(fh)
    except OSError as exc:
        raise GraphLoadError(f"cannot read graph file {spec!r}: {exc.strerror}") from None


def load_vertex_map(source, graph: DomainGraph | None = None) -> VertexMap:
    """Read ``{"target": ..., "p": ..., "values": [...], "graph"?: {...}}``."""
    doc = _read_json(source)
    if not isinstance(doc, dict):
        raise GraphLoadError("vertex map must be a JSON object")
    for key in ("target", "values"):
        if key not in doc:
            raise GraphLoadError(f"vertex map missing '{key}'")
    if graph is None:
        if "graph" not in doc:
            raise GraphLoadError("vertex map has no embedded graph and none was supplied")
        graph = graph_from_dict(doc["graph"])
    try:
        target = manifold_from_dict(doc["target"])
        return VertexMap(graph, target, np.asarray(doc["values"], dtype=float), float(doc.get("p", 2.0)))
    except (GeometryError, ValueError, TypeError) as exc:
        raise GraphLoadError(f"invalid vertex map: {exc}") from None
