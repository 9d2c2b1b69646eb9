import warnings
from fractions import Fraction

import numpy as np
import pytest

from oracles import hyperboloid_point
from pharmonic.comparison import (
    Tolerances,
    build_homotopy,
    compare,
    t_values,
    verify_constant_distance,
    verify_energy_constancy,
    verify_negative_curvature_collapse,
    verify_parallel_differential,
)
from pharmonic.geometry import Euclidean, GeometryError, Hyperbolic
from pharmonic.graph import VertexMap, builtin_graph
from pharmonic.solver import lift_along_homotopy

H2 = Hyperbolic(2)


def geodesic_pair(n=9, h=0.1, shift=0.3):
    g = builtin_graph("path", n)
    u = VertexMap(g, H2, [hyperboloid_point(q * h) for q in range(n)], 2.0)
    v = VertexMap(g, H2, [hyperboloid_point(shift + q * h) for q in range(n)], 2.0)
    return u, v


class TestPieces:
    def test_t_values(self):
        assert t_values(3) == [0, Fraction(1, 2), 1]
        assert t_values([1, 0.5, 0, 0.5]) == [0, Fraction(1, 2), 1]
        with pytest.raises(ValueError):
            t_values(1)
        with pytest.raises(ValueError):
            t_values([0, 1.5])

    def test_tolerances(self):
        tol = Tolerances(solver=1e-10)
        assert tol.tol_dist == pytest.approx(5e-9) and tol.tol_residual == pytest.approx(1e-9)
        assert Tolerances(dist=1e-3).tol_dist == 1e-3
        with pytest.raises(ValueError):
            Tolerances(energy=0)

    def test_constant_distance_on_torus(self, c16_pair):
        r, spread, pair = verify_constant_distance(*c16_pair)
        assert r.shape == (16,) and spread < 5e-9
        assert np.all(r > 0)

    def test_endpoints_exact_and_swap_reverses(self, c16_pair):
        u, v = c16_pair
        fwd = build_homotopy(lift_along_homotopy(u, v), 11)
        bwd = build_homotopy(lift_along_homotopy(v, u), 11)
        np.testing.assert_array_equal(fwd[0].values, u.values)
        np.testing.assert_array_equal(fwd[-1].values, v.values)
        for a, b in zip(fwd, reversed(bwd)):
            np.testing.assert_array_equal(a.values, b.values)

    def test_hyperbolic_homotopy_on_geodesics(self):
        u, v = geodesic_pair()
        fam = build_homotopy(lift_along_homotopy(u, v), 5)
        for k, m in enumerate(fam):
            np.testing.assert_allclose(m.values, [hyperboloid_point(0.3 * k / 4 + q * 0.1) for q in range(9)], atol=1e-12)
        assert verify_parallel_differential(fam) < 1e-12

    def test_energy_constancy_and_refinement(self, c16_pair):
        pair = lift_along_homotopy(*c16_pair)
        E, spread, res = verify_energy_constancy(build_homotopy(pair, 11), bc="free")
        assert spread < 1e-6 and res.max() < 1e-8
        _, fine, _ = verify_energy_constancy(build_homotopy(pair, 21), bc="free")
        assert fine < 1e-6

    def test_energy_nonconstant_for_unrelated_maps(self, rng):
        g = builtin_graph("cycle", 6)
        E2 = Euclidean(2)
        u = VertexMap(g, E2, rng.normal(size=(6, 2)), 3.0)
        v = u.with_values(rng.normal(size=(6, 2)))
        _, spread, _ = verify_energy_constancy(build_homotopy(lift_along_homotopy(u, v), 5))
        assert spread > 1e-3


class TestCollapse:
    def test_geodesic_pair(self):
        verdict = verify_negative_curvature_collapse(*geodesic_pair())
        assert verdict.verdict == "yes" and verdict.deviation < 1e-9 and verdict.hypotheses_hold

    def test_perturbed_control_flagged(self):
        u, v = geodesic_pair()
        vals = v.values.copy()
        vals[4] = H2.exp(vals[4], np.array([0.0, 0.0, 0.05]))
        with pytest.warns(RuntimeWarning, match="hypotheses violated"):
            verdict = verify_negative_curvature_collapse(u, v.with_values(vals))
        assert verdict.verdict == "no" and not verdict.hypotheses_hold
        assert verdict.deviation > 1e-3

    def test_not_applicable(self, c16_pair):
        assert verify_negative_curvature_collapse(*c16_pair).verdict == "n.a."
        u, _ = geodesic_pair()
        assert verify_negative_curvature_collapse(u, u).verdict == "n.a."


class TestCompare:
    def test_c16_all_pass(self, c16_pair):
        rep = compare(*c16_pair, t_grid=11, tolerances=Tolerances(solver=1e-10, energy=1e-6), bc="free")
        assert rep.passed, [c.to_dict() for c in rep.checks if not c.passed]
        families = {c.family for c in rep.checks}
        assert families == {"constant_distance", "homotopy_endpoints", "energy_constancy", "parallel_differential", "geodesic_image"}
        byname = {c.name: c for c in rep.checks}
        assert byname["homotopy_residual"].enforced
        assert not byname["geodesic_deviation"].enforced
        assert set(rep.to_dict()) >= {"distance_field", "energies", "tolerances", "geodesic_image"}

    def test_hyperbolic_pair(self):
        rep = compare(*geodesic_pair(), t_grid=5)
        byname = {c.name: c for c in rep.checks}
        assert byname["geodesic_deviation"].enforced and byname["geodesic_deviation"].passed
        assert not byname["homotopy_residual"].enforced

    def test_distance_failure_detected(self, c16_pair):
        u, v = c16_pair
        vals = v.values.copy()
        vals[3] = (vals[3] + [0.01, 0.0]) % 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = compare(u, v.with_values(vals), bc="free")
        assert not rep.passed
        assert not {c.name: c for c in rep.checks}["distance_spread"].passed

    def test_mismatched_inputs(self, c16_pair):
        u, _ = geodesic_pair()
        with pytest.raises(GeometryError):
            compare(u, c16_pair[0])
