"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import math

import numpy as np

from .geometry import GeometryError
from .graph import DomainGraph, VertexMap


def check_p(p, minimum: float = 2.0, strict: bool = False) -> float:
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise ValueError(f"p must be a number, got {p!r}") from None
    bad = p <= minimum if strict else p < minimum
    if not math.isfinite(p) or bad:
        rel = ">" if strict else ">="
        raise ValueError(f"p must be {rel} {minimum}, got {p}")
    return p


def check_tolerance(value, name: str = "tol") -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number") from None
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_graph(graph) -> DomainGraph:
    if not isinstance(graph, DomainGraph):
        raise TypeError(f"expected a DomainGraph, got {type(graph).__name__}")
    return graph


def check_vertex_map(m) -> VertexMap:
    if not isinstance(m, VertexMap):
        raise TypeError(f"expected a VertexMap, got {type(m).__name__}")
    if not np.all(np.isfinite(m.values)):
        raise ValueError("vertex map contains non-finite values")
    return m


def check_pair(u, v) -> tuple[VertexMap, VertexMap]:
    u, v = check_vertex_map(u), check_vertex_map(v)
    if u.graph.n_vertices != v.graph.n_vertices:
        raise GeometryError("u and v live on graphs of different size")
    if u.target != v.target:
        raise GeometryError("u and v have different targets")
    if u.p != v.p:
        raise GeometryError(f"u and v have different p ({u.p} vs {v.p})")
    return u, v
