import json

import numpy as np
import pytest

from oracles import PATH3_DENSITY_MID_P2, PATH3_DENSITY_MID_P4, PATH3_ENERGY_P2, vertex_energy_scalar
from pharmonic.geometry import Euclidean, FlatTorus, Hyperbolic
from pharmonic.graph import (
    DomainGraph,
    GraphLoadError,
    VertexMap,
    builtin_graph,
    energy_density,
    load_graph,
    load_vertex_map,
    p_energy,
    resolve_graph,
)

R1 = Euclidean(1)


def path3_map(p):
    return VertexMap(builtin_graph("path", 3), R1, [0.0, 1.0, 2.0], p)


class TestDensityAndEnergy:
    def test_path3_density(self):
        assert energy_density(path3_map(2), 1) == pytest.approx(PATH3_DENSITY_MID_P2)
        assert energy_density(path3_map(4), 1) == pytest.approx(PATH3_DENSITY_MID_P4)

    def test_path3_energy(self):
        assert p_energy(path3_map(2)) == pytest.approx(PATH3_ENERGY_P2)

    def test_constant_map_has_zero_energy(self):
        g = builtin_graph("grid2d", 4)
        assert p_energy(VertexMap(g, R1, np.full(16, 3.0), 3)) == 0.0

    def test_matches_scalar_oracle(self, rng):
        g = builtin_graph("grid2d", 5)
        x = rng.normal(size=g.n_vertices)
        mu = rng.uniform(0.5, 2.0, size=g.n_vertices)
        w = rng.uniform(0.5, 2.0, size=g.n_edges)
        g2 = DomainGraph(g.ids, mu, g.edges, w, g.boundary, exhaustion=g.exhaustion)
        for p in (2, 2.5, 3, 4):
            assert p_energy(VertexMap(g2, R1, x, p)) == pytest.approx(
                vertex_energy_scalar(x, g.edges.tolist(), w, mu, p), rel=1e-12
            )

    def test_region_additivity(self, rng):
        g = builtin_graph("grid2d", 7)
        m = VertexMap(g, Euclidean(2), rng.normal(size=(g.n_vertices, 2)), 3)
        prev = 0.0
        for level in g.exhaustion:
            E = p_energy(m, level)
            assert E >= prev - 1e-15
            inside = set(level.tolist())
            rest = [q for q in range(g.n_vertices) if q not in inside]
            assert E + p_energy(m, rest) == pytest.approx(p_energy(m), rel=1e-12)
            prev = E
        assert p_energy(m, []) == 0.0

    def test_permutation_invariance(self, rng):
        g = builtin_graph("torus_grid", 4)
        T = Hyperbolic(2)
        vals = np.array([T.random_point(rng) for _ in range(g.n_vertices)])
        perm = rng.permutation(g.n_vertices)
        inv = np.argsort(perm)
        gp = g.permuted(perm)
        assert p_energy(VertexMap(gp, T, vals[inv], 3)) == pytest.approx(p_energy(VertexMap(g, T, vals, 3)), rel=1e-13)

    def test_torus_deck_invariance(self, rng):
        g = builtin_graph("cycle", 9)
        T = FlatTorus((1.0, 2.0))
        vals = np.array([T.random_point(rng) for _ in range(9)])
        m = VertexMap(g, T, vals, 2.5)
        shifted = m.with_values(vals + np.array([1.0, -2.0]) * rng.integers(-3, 4, size=(9, 2)))
        assert p_energy(shifted) == pytest.approx(p_energy(m), rel=1e-12)


class TestBuiltins:
    @pytest.mark.parametrize(
        "name,n,nv,ne",
        [("path", 5, 5, 4), ("cycle", 6, 6, 6), ("grid2d", 4, 16, 24), ("grid3d", 3, 27, 54), ("torus_grid", 4, 16, 32)],
    )
    def test_sizes(self, name, n, nv, ne):
        g = builtin_graph(name, n)
        assert (g.n_vertices, g.n_edges) == (nv, ne)
        assert g.exhaustion[-1].size == nv

    def test_boundary_conventions(self):
        assert builtin_graph("path", 4).boundary.tolist() == [True, False, False, True]
        assert not builtin_graph("cycle", 4).has_boundary
        assert builtin_graph("grid2d", 3).boundary.sum() == 8
        assert not builtin_graph("torus_grid", 3).has_boundary

    def test_generators(self):
        assert builtin_graph("cycle", 5).generators == [[0, 1, 2, 3, 4]]
        assert len(builtin_graph("torus_grid", 3).generators) == 2
        assert builtin_graph("path", 5).generators == []

    def test_exhaustion_nested(self):
        g = builtin_graph("grid2d", 9)
        sizes = [lv.size for lv in g.exhaustion]
        assert sizes == [1, 9, 25, 49, 81]

    def test_resolve(self):
        assert resolve_graph("builtin:cycle:7").n_vertices == 7
        for bad in ("builtin:cycle", "builtin:blob:3", "builtin:path:x", "builtin:path:1", "/nonexistent.json"):
            with pytest.raises(GraphLoadError):
                resolve_graph(bad)


def triangle_doc():
    return {
        "vertices": [{"id": "a"}, {"id": "b", "mu": 2.0}, {"id": "c", "boundary": True}],
        "edges": [{"a": "a", "b": "b"}, {"a": "b", "b": "c", "w": 0.5}, {"a": "c", "b": "a"}],
        "generators": [["a", "b", "c"]],
    }


class TestLoading:
    def test_roundtrip(self):
        g = load_graph(json.dumps(triangle_doc()))
        assert g.ids == ["a", "b", "c"]
        assert g.mu.tolist() == [1.0, 2.0, 1.0]
        assert g.boundary.tolist() == [False, False, True]
        g2 = load_graph(g.to_dict())
        assert np.array_equal(g2.edges, g.edges) and np.array_equal(g2.weights, g.weights)

    @pytest.mark.parametrize(
        "mutate,msg",
        [
            (lambda d: d.update(vertices=[]), "non-empty"),
            (lambda d: d["vertices"].append({"id": "a"}), "duplicate"),
            (lambda d: d["vertices"][0].update(mu=0), "mu"),
            (lambda d: d["edges"][0].update(w=-1), "w"),
            (lambda d: d["edges"].append({"a": "a", "b": "zz"}), "unknown vertex"),
            (lambda d: d["edges"].append({"a": "a", "b": "a"}), "self-loop"),
            (lambda d: d.update(edges=[d["edges"][0]]), "disconnected"),
            (lambda d: d["edges"].pop(2), "no edge between c and a"),
            (lambda d: d.update(generators=[], exhaustion=[["a", "c"], ["a", "b", "c"]]) or d["edges"].pop(2), "induces"),
            (lambda d: d.update(exhaustion=[["a", "b"], ["a", "c"]]), "contain"),
            (lambda d: d.update(exhaustion=[["a"]]), "cover"),
        ],
    )
    def test_errors(self, mutate, msg):
        doc = triangle_doc()
        mutate(doc)
        with pytest.raises(GraphLoadError, match=msg):
            load_graph(doc)

    def test_bad_json_reports_location(self):
        with pytest.raises(GraphLoadError, match="line 1"):
            load_graph("{oops")

    def test_vertex_map(self):
        g = load_graph(triangle_doc())
        doc = {"target": {"kind": "euclidean", "dim": 1}, "p": 3, "values": [0.0, 1.0, 2.0]}
        m = load_vertex_map(doc, g)
        assert m.p == 3 and m.values.shape == (3, 1)
        doc["graph"] = triangle_doc()
        assert load_vertex_map(json.dumps(doc)).graph.n_vertices == 3

    def test_vertex_map_errors(self):
        g = load_graph(triangle_doc())
        with pytest.raises(GraphLoadError, match="embedded graph"):
            load_vertex_map({"target": {"kind": "euclidean", "dim": 1}, "values": [0, 1, 2]})
        with pytest.raises(GraphLoadError, match="invalid vertex map"):
            load_vertex_map({"target": {"kind": "euclidean", "dim": 1}, "values": [0, 1]}, g)
        with pytest.raises(GraphLoadError, match="invalid vertex map"):
            load_vertex_map({"target": {"kind": "hyperbolic", "dim": 2}, "values": [[1, 0, 0]] * 2 + [[0, 1, 0]]}, g)
        with pytest.raises(GraphLoadError, match="invalid vertex map"):
            load_vertex_map({"target": {"kind": "euclidean", "dim": 1}, "values": [0, 1, 2], "p": 1.5}, g)
