import numpy as np
import pytest

from proxcmo.prox import (
    BoxIndicator,
    ConvergenceError,
    IntersectionIndicator,
    IntersectionSet,
    L1Norm,
    MoreauEnvelope,
    ShidokuIndicator,
    StackedProx,
    ZeroFunction,
    dykstra_project,
    project_shidoku,
    soft_threshold,
)


def grid_prox_1d(g_value, v, mu, lo=-5.0, hi=5.0, step=1e-4):
    """Brute-force prox oracle: minimize g(x) + (x-v)^2/(2 mu) on a grid."""
    xs = np.arange(lo, hi + step, step)
    vals = np.array([g_value(x) + (x - v) ** 2 / (2.0 * mu) for x in xs])
    k = int(np.argmin(vals))
    return xs[k], vals[k]


class TestSoftThreshold:
    def test_closed_form(self):
        np.testing.assert_allclose(soft_threshold([2.0, -0.3, 0.0], 0.5),
                                   [1.5, 0.0, 0.0])

    def test_zero_vector(self):
        np.testing.assert_allclose(soft_threshold(np.zeros(4), 1.0), np.zeros(4))

    def test_grid_oracle(self):
        x_star, _ = grid_prox_1d(abs, 0.7, 0.2, lo=-2.0, hi=2.0)
        out = soft_threshold([0.7], 0.2)
        assert abs(out[0] - 0.5) < 1e-12
        assert abs(out[0] - x_star) < 1e-4

    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError):
            soft_threshold([1.0], 0.0)
        with pytest.raises(ValueError):
            soft_threshold([1.0], -0.1)


class TestShidokuProjection:
    def test_boundaries(self):
        # the tie at each half-integer belongs to the lower cell
        np.testing.assert_allclose(project_shidoku([1.5]), [1.0])
        np.testing.assert_allclose(project_shidoku([2.5]), [2.0])
        np.testing.assert_allclose(project_shidoku([3.5]), [3.0])

    def test_outer_branches(self):
        np.testing.assert_allclose(project_shidoku([3.6]), [4.0])
        np.testing.assert_allclose(project_shidoku([-10.0, 100.0]), [1.0, 4.0])

    def test_fixed_on_cells(self):
        cells = np.array([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(project_shidoku(cells), cells)


class TestMoreauEnvelope:
    def test_l1_gradient_saturates(self):
        env = MoreauEnvelope(L1Norm(), 2.0)
        np.testing.assert_allclose(env.gradient([3.0]), [1.0])
        env1 = MoreauEnvelope(L1Norm(), 1.0)
        np.testing.assert_allclose(env1.gradient([0.5]), [0.5])

    def test_box_gradient_is_projection_gap(self):
        env = MoreauEnvelope(BoxIndicator(-1.0, 1.0), 1.0)
        np.testing.assert_allclose(env.gradient([2.0]), [1.0])

    def test_l1_value_huber_branches(self):
        env = MoreauEnvelope(L1Norm(), 1.0)
        assert env.value([0.5]) == pytest.approx(0.125)   # quadratic branch
        assert env.value([3.0]) == pytest.approx(2.5)     # linear branch

    def test_value_grid_oracle(self):
        mu = 0.4
        env = MoreauEnvelope(L1Norm(), mu)
        _, oracle = grid_prox_1d(abs, 0.9, mu)
        assert env.value([0.9]) == pytest.approx(oracle, abs=1e-6)
        assert env.value([0.9]) == pytest.approx(0.9 - mu / 2.0, abs=1e-12)

    def test_value_grid_oracle_random(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            v = rng.uniform(-3.0, 3.0)
            mu = rng.uniform(0.2, 2.0)
            env = MoreauEnvelope(L1Norm(), mu)
            _, oracle = grid_prox_1d(abs, v, mu)
            assert env.value([v]) == pytest.approx(oracle, abs=1e-6)

    def test_envelope_below_g(self):
        rng = np.random.default_rng(7)
        g = L1Norm(1.3)
        env = MoreauEnvelope(g, 0.7)
        for _ in range(50):
            v = rng.normal(size=6)
            assert env.value(v) <= g.g_value(v) + 1e-12

    def test_gradient_identity_vs_prox(self):
        rng = np.random.default_rng(11)
        env = MoreauEnvelope(L1Norm(), 0.6)
        v = rng.normal(size=8)
        np.testing.assert_allclose(
            env.gradient(v), (v - env.prox_point(v)) / 0.6, rtol=0, atol=0)

    def test_broken_prox_is_reported(self):
        class Broken:
            def eval(self, v, mu):
                return np.asarray(v) + 10.0  # lands outside the box

            def g_value(self, x):
                return np.inf

        env = MoreauEnvelope(Broken(), 1.0)
        with pytest.raises(ValueError):
            env.value([0.0])

    @pytest.mark.parametrize("g", [L1Norm(), BoxIndicator(-1.0, 1.0)])
    def test_finite_difference_gradient(self, g):
        # the envelope is C^1 everywhere for these g, so sample freely
        rng = np.random.default_rng(5)
        env = MoreauEnvelope(g, 0.8)
        h = 1e-6
        for _ in range(200):
            v = rng.uniform(-2.5, 2.5, size=3)
            grad = env.gradient(v)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                fd = (env.value(v + e) - env.value(v - e)) / (2.0 * h)
                assert abs(fd - grad[i]) < 1e-5


class TestNonexpansiveness:
    @pytest.mark.parametrize("g", [
        L1Norm(), L1Norm(0.3), BoxIndicator(-1.0, 1.0), ZeroFunction(),
        IntersectionIndicator(IntersectionSet(1.0, 1.2)),
    ])
    def test_500_random_pairs(self, g):
        rng = np.random.default_rng(17)
        for _ in range(500):
            v = rng.normal(scale=2.0, size=5)
            w = rng.normal(scale=2.0, size=5)
            lhs = np.linalg.norm(g.eval(v, 0.9) - g.eval(w, 0.9))
            assert lhs <= np.linalg.norm(v - w) + 1e-12


class TestDykstra:
    def test_axis_point(self):
        out = dykstra_project([2.0, 0.0], IntersectionSet(1.0, 1.0))
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-9)

    def test_ball_inside_box(self):
        # the 2-ball of radius 1 sits inside the unit box
        out = dykstra_project([2.0, 2.0], IntersectionSet(1.0, 1.0))
        np.testing.assert_allclose(out, [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-9)

    def test_box_projection_already_feasible(self):
        out = dykstra_project([1.5, 0.2], IntersectionSet(1.0, 1.2))
        np.testing.assert_allclose(out, [1.0, 0.2], atol=1e-9)

    def test_interior_point_fixed(self):
        v = np.array([0.1, -0.2, 0.05])
        out = dykstra_project(v, IntersectionSet(1.0, 1.0))
        np.testing.assert_allclose(out, v, atol=1e-12)

    def test_feasible_and_idempotent(self):
        rng = np.random.default_rng(23)
        set_ = IntersectionSet(0.8, 2.0)
        tol = 1e-10
        for _ in range(50):
            v = rng.normal(scale=3.0, size=12)
            p = dykstra_project(v, set_, tol=tol)
            assert np.max(np.abs(p)) <= set_.inf_radius + tol
            assert np.linalg.norm(p) <= set_.two_radius + tol
            p2 = dykstra_project(p, set_, tol=tol)
            assert np.linalg.norm(p2 - p) <= 10 * tol

    def test_matches_exact_projection_qp(self):
        # tiny cases where the exact projection is computable by enumeration
        # of active constraints: 2-d, box then ball both active
        set_ = IntersectionSet(1.0, 1.3)
        v = np.array([2.0, 1.2])
        p = dykstra_project(v, set_, tol=1e-12)
        # active box on coord 0; remaining mass on coord 1 limited by ball
        x1 = min(1.2, np.sqrt(set_.two_radius ** 2 - 1.0))
        np.testing.assert_allclose(p, [1.0, x1], atol=1e-8)

    def test_nonconvergence_raises(self):
        with pytest.raises(ConvergenceError):
            dykstra_project([5.0, 5.0], IntersectionSet(1.0, 1.0),
                            tol=1e-14, max_iter=1)


class TestStackedProx:
    def test_blocks_act_independently(self):
        g = StackedProx([(2, ZeroFunction()), (3, L1Norm())])
        v = np.array([2.0, -1.0, 2.0, -0.3, 0.0])
        out = g.eval(v, 0.5)
        np.testing.assert_allclose(out[:2], v[:2])
        np.testing.assert_allclose(out[2:], soft_threshold(v[2:], 0.5))
        assert g.g_value(v) == pytest.approx(np.abs(v[2:]).sum())

    def test_dimension_checked(self):
        g = StackedProx([(2, ZeroFunction())])
        with pytest.raises(ValueError):
            g.eval(np.zeros(3), 1.0)


class TestIndicators:
    def test_shidoku_membership(self):
        g = ShidokuIndicator()
        assert g.g_value([1.0, 4.0, 2.0]) == 0.0
        assert g.g_value([1.4]) == np.inf
        assert g.g_value([5.0]) == np.inf

    def test_box_membership(self):
        g = BoxIndicator(-1.0, 1.0)
        assert g.g_value([0.5, -1.0]) == 0.0
        assert g.g_value([1.1]) == np.inf

    def test_intersection_membership(self):
        g = IntersectionIndicator(IntersectionSet(1.0, 1.0))
        assert g.g_value([0.5, 0.5]) == 0.0
        assert g.g_value([0.9, 0.9]) == np.inf  # 2-norm too large

    def test_intersection_requires_positive_radii(self):
        with pytest.raises(ValueError):
            IntersectionSet(0.0, 1.0)
        with pytest.raises(ValueError):
            IntersectionSet(1.0, -2.0)
