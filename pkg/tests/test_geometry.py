import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hyperbolic_distance, hyperboloid_point, minkowski, transport_rk4
from pharmonic.geometry import (
    CutLocusError,
    Euclidean,
    FlatTorus,
    GeometryError,
    Hyperbolic,
    Product,
    manifold_from_dict,
)

KINDS = [
    Euclidean(3),
    Hyperbolic(2),
    Hyperbolic(3, -0.3),
    FlatTorus((1.0, 2.0)),
    Product(Hyperbolic(2), Euclidean(1)),
]


def near_pair(M, rng):
    a = M.random_point(rng)
    if isinstance(M, FlatTorus):
        step = rng.uniform(-0.45, 0.45, size=M.dim) * M.period_array
    else:
        step = M.random_tangent(a, rng)
    return a, M.exp(a, step)


class TestDistance:
    def test_euclidean_pythagoras(self):
        assert Euclidean(2).distance([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)

    @pytest.mark.parametrize("s", [0.5, 2.0])
    def test_hyperbolic_along_axis(self, s):
        H = Hyperbolic(2)
        d = H.distance(hyperboloid_point(s), np.array([1.0, 0.0, 0.0]))
        assert d == pytest.approx(s, abs=1e-14)

    def test_hyperbolic_matches_acosh_oracle(self, rng):
        for kappa in (-1.0, -0.3, -4.0):
            H = Hyperbolic(3, kappa)
            for _ in range(50):
                a, b = H.random_point(rng), H.random_point(rng)
                assert H.distance(a, b) == pytest.approx(hyperbolic_distance(a, b, kappa), rel=1e-9, abs=1e-9)

    def test_torus_wraparound(self):
        assert FlatTorus((1.0,)).distance([0.1], [0.9]) == pytest.approx(0.2)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_metric_axioms(self, M, rng):
        for _ in range(30):
            a, b = near_pair(M, rng)
            c = M.exp(b, M.random_tangent(b, rng, 0.3) if not isinstance(M, FlatTorus) else rng.uniform(-0.2, 0.2, M.dim))
            assert M.distance(a, b) == pytest.approx(M.distance(b, a), rel=1e-12, abs=1e-14)
            assert M.distance(a, a) == pytest.approx(0.0, abs=1e-7)
            assert M.distance(a, c) <= M.distance(a, b) + M.distance(b, c) + 1e-10


class TestLogExp:
    def test_euclidean_log(self):
        np.testing.assert_allclose(Euclidean(2).log([1.0, 1.0], [4.0, 5.0]), [3.0, 4.0])

    def test_hyperbolic_log_unit(self):
        v = Hyperbolic(2).log(np.array([1.0, 0, 0]), hyperboloid_point(1.0))
        np.testing.assert_allclose(v, [0.0, 1.0, 0.0], atol=1e-14)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_log_self_is_zero(self, M, rng):
        a = M.random_point(rng)
        assert np.abs(M.log(a, a)).max() == 0.0

    def test_exp_examples(self):
        np.testing.assert_allclose(Euclidean(2).exp([0.0, 0.0], [1.0, 2.0]), [1.0, 2.0])
        s = 0.7
        x = Hyperbolic(2).exp(np.array([1.0, 0, 0]), np.array([0.0, s, 0.0]))
        np.testing.assert_allclose(x, hyperboloid_point(s), atol=1e-14)
        assert minkowski(x, x) == pytest.approx(-1.0, abs=1e-12)
        assert FlatTorus((1.0,)).exp([0.8], [0.5])[0] == pytest.approx(0.3)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_round_trip(self, M, rng):
        worst = 0.0
        for _ in range(1000):
            a, b = near_pair(M, rng)
            back = M.exp(a, M.log(a, b))
            worst = max(worst, float(M.distance(back, b)))
        assert worst < 1e-9

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_log_norm_is_distance(self, M, rng):
        for _ in range(50):
            a, b = near_pair(M, rng)
            assert M.norm(a, M.log(a, b)) == pytest.approx(M.distance(a, b), rel=1e-10, abs=1e-12)

    def test_torus_cut_locus_raises(self):
        T = FlatTorus((1.0,))
        with pytest.raises(CutLocusError):
            T.log([0.0], [0.5])

    def test_hyperboloid_constraint_after_ops(self, rng):
        H = Hyperbolic(3, -0.3)
        R2 = H.radius**2
        for _ in range(100):
            a = H.random_point(rng, 3.0)
            b = H.exp(a, H.random_tangent(a, rng, 3.0))
            # evaluating the form itself cancels terms of size |b|^2
            assert abs(minkowski(b, b) + R2) <= 1e-12 * max(R2, float(b @ b))
            v = H.log(a, b)
            assert abs(minkowski(a, v)) < 1e-12 * max(1.0, np.abs(a).max() * np.abs(v).max())


class TestGeodesic:
    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_endpoints(self, M, rng):
        a, b = near_pair(M, rng)
        assert M.distance(M.geodesic(a, b, 0.0), a) < 1e-9
        assert M.distance(M.geodesic(a, b, 1.0), b) < 1e-9

    def test_examples(self):
        np.testing.assert_allclose(Euclidean(2).geodesic([0.0, 0.0], [2.0, 0.0], 0.25), [0.5, 0.0])
        mid = Hyperbolic(2).geodesic(np.array([1.0, 0, 0]), hyperboloid_point(2.0), 0.5)
        np.testing.assert_allclose(mid, hyperboloid_point(1.0), atol=1e-14)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_constant_speed(self, M, rng):
        a, b = near_pair(M, rng)
        h = 1e-5
        speeds = [M.distance(M.geodesic(a, b, t - h), M.geodesic(a, b, t + h)) / (2 * h) for t in (0.1, 0.3, 0.5, 0.7, 0.9)]
        np.testing.assert_allclose(speeds, M.distance(a, b), rtol=1e-6)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_interpolate_symmetric(self, M, rng):
        a, b = near_pair(M, rng)
        if isinstance(M, FlatTorus):
            return
        for k in range(11):
            t, s = k / 10, (10 - k) / 10
            assert np.array_equal(M.interpolate(a, b, t, s), M.interpolate(b, a, s, t))
            assert M.distance(M.interpolate(a, b, t, s), M.geodesic(a, b, t)) < 1e-9


class TestTransport:
    @pytest.mark.parametrize("M", [Euclidean(3), FlatTorus((1.0, 1.0))], ids=str)
    def test_flat_is_identity(self, M, rng):
        a, b = near_pair(M, rng)
        v = rng.normal(size=M.dim)
        np.testing.assert_array_equal(M.transport(v, a, b), v)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_isometry_and_inverse(self, M, rng):
        for _ in range(100):
            a, b = near_pair(M, rng)
            X, Y = M.random_tangent(a, rng), M.random_tangent(a, rng)
            PX, PY = M.transport(X, a, b), M.transport(Y, a, b)
            assert M.inner(b, PX, PY) == pytest.approx(M.inner(a, X, Y), rel=1e-9, abs=1e-9)
            np.testing.assert_allclose(M.transport(PX, b, a), X, atol=1e-9 * max(1, np.abs(X).max()))

    def test_same_point_identity(self, rng):
        H = Hyperbolic(2)
        a = H.random_point(rng)
        X = H.random_tangent(a, rng)
        np.testing.assert_allclose(H.transport(X, a, a), X, atol=1e-13)

    def test_tangent_carried_to_tangent(self):
        H = Hyperbolic(2)
        a, b = np.array([1.0, 0, 0]), hyperboloid_point(1.3)
        T0 = H.log(a, b) / H.distance(a, b)
        T1 = -H.log(b, a) / H.distance(a, b)
        np.testing.assert_allclose(H.transport(T0, a, b), T1, atol=1e-12)

    def test_matches_rk4_transport(self, rng):
        for kappa in (-1.0, -0.3):
            H = Hyperbolic(2, kappa)
            for _ in range(5):
                a, b = H.random_point(rng), H.random_point(rng)
                v = H.random_tangent(a, rng)
                np.testing.assert_allclose(H.transport(v, a, b), transport_rk4(a, b, v, kappa), atol=1e-9)


class TestCurvature:
    @pytest.mark.parametrize("M", [Euclidean(2), FlatTorus((1.0, 1.0))], ids=str)
    def test_flat_zero(self, M, rng):
        x = M.random_point(rng)
        assert np.abs(M.curvature(x, rng.normal(size=2), rng.normal(size=2))).max() == 0.0

    def test_hyperbolic_orthonormal(self):
        H = Hyperbolic(3, -0.3)
        o = H.origin
        E = H.tangent_basis(o)
        np.testing.assert_allclose(H.curvature(o, E[0], E[1]), -0.3 * E[0], atol=1e-15)
        assert np.abs(H.curvature(o, E[1], E[1])).max() == 0.0

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_sign(self, M, rng):
        for _ in range(1000):
            x = M.random_point(rng)
            Z, T = M.random_tangent(x, rng), M.random_tangent(x, rng)
            assert M.inner(x, M.curvature(x, Z, T), Z) <= 1e-12

    def test_sectional_values(self, rng):
        E = Euclidean(3)
        assert E.sectional_curvature(np.zeros(3), [1.0, 0, 0], [0, 1.0, 0]) == 0.0
        H = Hyperbolic(3, -1.0)
        for _ in range(20):
            x = H.random_point(rng)
            k = H.sectional_curvature(x, H.random_tangent(x, rng), H.random_tangent(x, rng))
            assert k == pytest.approx(-1.0, abs=1e-9)
        P = Product(Hyperbolic(2), Euclidean(1))
        x = P.random_point(rng)
        B = P.tangent_basis(x)
        assert P.sectional_curvature(x, B[0], B[2]) == pytest.approx(0.0, abs=1e-14)
        assert P.sectional_curvature(x, B[0], B[1]) == pytest.approx(-1.0, abs=1e-9)

    def test_degenerate_plane_raises(self):
        with pytest.raises(GeometryError):
            Euclidean(2).sectional_curvature(np.zeros(2), [1.0, 0.0], [2.0, 0.0])


class TestConstruction:
    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "euclidean", "dim": 0},
            {"kind": "hyperbolic", "dim": 2, "kappa": 1.0},
            {"kind": "flat_torus", "periods": [1.0, -1.0]},
            {"kind": "sphere", "dim": 2},
            {"dim": 2},
        ],
    )
    def test_invalid_specs(self, spec):
        with pytest.raises(GeometryError):
            manifold_from_dict(spec)

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_round_trip_dict(self, M):
        assert manifold_from_dict(M.to_dict()) == M

    def test_product_dim(self):
        assert Product(Hyperbolic(2), Euclidean(3)).dim == 5

    @pytest.mark.parametrize("M", KINDS, ids=str)
    def test_tangent_basis_orthonormal(self, M, rng):
        x = M.random_point(rng, 2.0)
        B = M.tangent_basis(x)
        G = np.array([[M.inner(x, u, v) for v in B] for u in B])
        np.testing.assert_allclose(G, np.eye(M.dim), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(
    s=st.floats(0.0, 4.0),
    t=st.floats(0.0, 1.0),
    kappa=st.sampled_from([-1.0, -0.3, -2.5]),
)
def test_hyperbolic_geodesic_fraction(s, t, kappa):
    H = Hyperbolic(2, kappa)
    R = H.radius
    a = hyperboloid_point(0.0, R=R)
    b = hyperboloid_point(s, R=R)
    x = H.geodesic(a, b, t)
    assert H.distance(a, x) == pytest.approx(t * s, abs=1e-9)
