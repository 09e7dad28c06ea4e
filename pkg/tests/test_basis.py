import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vegcover.basis import (KnotSet, TPSBasis, axis_counts, check_spatial_identifiability, eval_tps_basis,
                            factor_pair, fit_tps_basis, make_quantile_knots, make_regular_knots, tps_kernel)
from vegcover.errors import ConfigError

UNIT = [[0.0, 1.0], [0.0, 1.0]]


def straight_tps(p, q):
    r = np.hypot(p[0] - q[0], p[1] - q[1])
    return 0.0 if r == 0 else r * r * np.log(r)


class TestRegularKnots:
    def test_single_knot_at_centre(self):
        ks = make_regular_knots(UNIT, (1, 1))
        np.testing.assert_array_equal(ks.knots, [[0.5, 0.5]])

    def test_two_by_two_cell_centres(self):
        ks = make_regular_knots(UNIT, (2, 2))
        got = {tuple(k) for k in ks.knots}
        assert got == {(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)}

    def test_five_by_six_gives_thirty(self):
        ks = make_regular_knots(UNIT, (5, 6))
        assert len(ks) == 30
        assert len(np.unique(ks.knots[:, 0])) == 5
        assert len(np.unique(ks.knots[:, 1])) == 6

    def test_knots_inside_bounds(self):
        ks = make_regular_knots([[400, 1900], [15, 345]], (3, 4))
        assert np.all(ks.knots[:, 0] > 400) and np.all(ks.knots[:, 0] < 1900)
        assert np.all(ks.knots[:, 1] > 15) and np.all(ks.knots[:, 1] < 345)

    @pytest.mark.parametrize("bounds", [[[0, 0], [0, 1]], [[0, 1], [2, 2]], [[1, 0], [0, 1]]])
    def test_degenerate_bounds_rejected(self, bounds):
        with pytest.raises(ConfigError):
            make_regular_knots(bounds, (2, 2))

    def test_nonpositive_count_rejected(self):
        with pytest.raises(ConfigError):
            make_regular_knots(UNIT, (0, 2))


class TestQuantileKnots:
    def test_uniform_grid_quartiles(self):
        g = np.linspace(0, 1, 101)
        gx, gy = np.meshgrid(g, g)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        ks = make_quantile_knots(pts, (2, 2))
        np.testing.assert_allclose(np.unique(ks.knots[:, 0]), [0.25, 0.75], atol=1e-12)
        np.testing.assert_allclose(np.unique(ks.knots[:, 1]), [0.25, 0.75], atol=1e-12)

    def test_constant_axis_names_axis(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([np.full(100, 3.0), rng.random(100)])
        with pytest.raises(ConfigError, match="axis x has 1 distinct value"):
            make_quantile_knots(pts, (2, 1))

    def test_skewed_strips_hold_equal_thirds(self):
        rng = np.random.default_rng(5)
        pts = np.column_stack([rng.exponential(size=3000), rng.lognormal(size=3000)])
        ks = make_quantile_knots(pts, (3, 3))
        for axis in (0, 1):
            k = np.unique(ks.knots[:, axis])
            # knots sit at the 1/6, 1/2 and 5/6 quantiles, so 1/3 of points lies between neighbours
            between = [np.sum((pts[:, axis] > a) & (pts[:, axis] <= b)) for a, b in zip(k[:-1], k[1:])]
            np.testing.assert_allclose(np.array(between) / len(pts), [1 / 3, 1 / 3], atol=0.01)

    def test_strip_counts_at_ten_thousand_points(self):
        rng = np.random.default_rng(11)
        n, c = 10_000, 5
        pts = rng.random((n, 2))
        ks = make_quantile_knots(pts, (c, c))
        edges = np.concatenate([[-np.inf], np.unique(ks.knots[:, 0]), [np.inf]])
        # half strips at the ends hold 1/(2c); interior strips hold 1/c
        counts = np.histogram(pts[:, 0], bins=edges)[0]
        interior = counts[1:-1]
        assert np.all(interior >= n // c - np.sqrt(n))
        assert np.all(interior <= -(-n // c) + np.sqrt(n))


class TestTPSEvaluation:
    def test_unit_distance_is_zero(self):
        ks = KnotSet([[0.0, 0.0]], UNIT)
        assert eval_tps_basis([[1.0, 0.0]], ks).values[0, 0] == 0.0

    def test_distance_e_gives_e_squared(self):
        ks = KnotSet([[0.0, 0.0]], [[0.0, 3.0], [0.0, 3.0]])
        v = eval_tps_basis([[np.e, 0.0]], ks).values[0, 0]
        assert v == pytest.approx(7.38905609893065, rel=1e-14)

    def test_coincident_point_is_zero(self):
        ks = KnotSet([[0.3, 0.7]], UNIT)
        assert eval_tps_basis([[0.3, 0.7]], ks).values[0, 0] == 0.0

    def test_matches_straight_line_loop(self):
        rng = np.random.default_rng(2)
        pts = rng.random((7, 2))
        ks = make_regular_knots(UNIT, (2, 3))
        got = eval_tps_basis(pts, ks).values
        want = np.array([[straight_tps(p, q) for q in ks.knots] for p in pts])
        np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-15)
        assert got.shape == (7, 6)

    def test_nonfinite_point_reports_id(self):
        ks = make_regular_knots(UNIT, (1, 1))
        with pytest.raises(ConfigError, match="site-b"):
            eval_tps_basis([[0.1, 0.2], [np.nan, 0.1]], ks, point_ids=["site-a", "site-b"])

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        pts = rng.random((20, 2))
        ks = make_regular_knots(UNIT, (3, 3))
        a = eval_tps_basis(pts, ks).values
        b = eval_tps_basis(pts.copy(), ks).values
        assert np.array_equal(a, b)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=50, deadline=None)
    def test_swap_point_and_knot_symmetric(self, a, b, c, d):
        bounds = [[-5, 5], [-5, 5]]
        v1 = eval_tps_basis([[a, b]], KnotSet([[c, d]], bounds)).values[0, 0]
        v2 = eval_tps_basis([[c, d]], KnotSet([[a, b]], bounds)).values[0, 0]
        assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-300)
        assert np.isfinite(v1)

    def test_kernel_at_zero(self):
        assert tps_kernel(np.array([0.0]))[0] == 0.0


class TestFittedBasis:
    def test_units_invariance(self):
        w = np.array([400.0, 700, 1000, 1300, 1600, 1900])
        d = 15.0 + 30 * np.arange(12)
        gw, gd = np.meshgrid(w, d, indexing="ij")
        pts = np.column_stack([gw.ravel(), gd.ravel()])
        scaled = np.column_stack([pts[:, 0] / 1000.0, pts[:, 1] / 365.0 + 2.0])
        a = fit_tps_basis(pts, 30).evaluate(pts).values
        b = fit_tps_basis(scaled, 30).evaluate(scaled).values
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_columns_have_unit_sd_on_training_points(self):
        rng = np.random.default_rng(4)
        pts = rng.random((200, 2)) * [10, 3]
        basis = fit_tps_basis(pts, 12, strategy="quantile")
        np.testing.assert_allclose(basis.evaluate(pts).values.std(axis=0), 1.0, rtol=1e-12)

    def test_dict_round_trip(self):
        rng = np.random.default_rng(6)
        pts = rng.random((50, 2))
        basis = fit_tps_basis(pts, 6)
        again = TPSBasis.from_dict(basis.to_dict())
        q = rng.random((9, 2))
        assert np.array_equal(basis.evaluate(q).values, again.evaluate(q).values)

    def test_factor_pair(self):
        assert factor_pair(30) == (5, 6)
        assert factor_pair(35) == (5, 7)
        assert factor_pair(70) == (7, 10)
        assert factor_pair(7) == (1, 7)

    def test_larger_count_on_axis_with_more_values(self):
        pts = np.column_stack([np.repeat(np.arange(6.0), 12), np.tile(np.arange(12.0), 6)])
        assert axis_counts(30, pts) == (5, 6)
        assert axis_counts(30, pts[:, ::-1]) == (6, 5)

    def test_explicit_bounds_allow_single_point(self):
        basis = fit_tps_basis([[400.0, 15.0]], 1, bounds=[[400.0, 500.0], [15.0, 45.0]])
        np.testing.assert_array_equal(basis.lower, [400.0, 15.0])
        np.testing.assert_array_equal(basis.upper, [500.0, 45.0])
        assert np.isfinite(basis.evaluate([[400.0, 15.0]]).values).all()
        with pytest.raises(ConfigError, match="degenerate"):
            fit_tps_basis([[400.0, 15.0]], 1)

    def test_bad_counts_rejected(self):
        with pytest.raises(ConfigError):
            fit_tps_basis(np.random.default_rng(0).random((20, 2)), 6, counts=(2, 2))


class TestIdentifiability:
    def test_duplicated_column_flagged(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(30), rng.standard_normal(30)])
        H = np.column_stack([rng.standard_normal(30), X[:, 1]])
        assert check_spatial_identifiability(X, H).deficient

    def test_zero_column_flagged(self):
        rng = np.random.default_rng(1)
        X = np.ones((30, 1))
        H = np.column_stack([rng.standard_normal((30, 3)), np.zeros(30)])
        assert check_spatial_identifiability(X, H).deficient

    def test_intercept_and_tps_on_six_by_six_grid_full_rank(self):
        g = np.linspace(0, 1, 6)
        gx, gy = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        knots = make_regular_knots(UNIT, (3, 3))
        H = eval_tps_basis(pts, knots).values
        X = np.ones((36, 1))
        rep = check_spatial_identifiability(X, H)
        # independent straight-line construction of [X | H] and its singular values
        Z = np.array([[1.0] + [straight_tps(p, q) for q in knots.knots] for p in pts])
        s = np.linalg.svd(Z, compute_uv=False)
        assert s[-1] / s[0] > 1e-6
        assert rep.rank == 10 and not rep.deficient

    def test_row_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            check_spatial_identifiability(np.ones((3, 1)), np.ones((4, 1)))
