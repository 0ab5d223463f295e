import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventlab import IntervalQP, minimal_inflation, solve_interval_qp


def random_equality_qp(rng, n=None, k=None):
    n = n or int(rng.integers(5, 30))
    k = k or int(rng.integers(1, min(n, 6)))
    A = rng.normal(size=(n, k))
    w0 = rng.normal(size=n)
    b = A.T @ w0          # guaranteed consistent
    return IntervalQP(A=A, lo=b, hi=b)


class TestEqualityClosedForm:
    def test_matches_pseudoinverse(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            qp = random_equality_qp(rng)
            res = solve_interval_qp(qp)
            assert res.status == "optimal"
            expected = qp.A @ np.linalg.pinv(qp.A.T @ qp.A) @ qp.lo
            np.testing.assert_allclose(res.weights, expected, atol=1e-9)

    def test_three_point_mean_constraint(self):
        # basis x = (0,1,2), weighted mean 1 with weights summing to one:
        # the minimum-norm solution is uniform
        A = np.column_stack([np.array([0.0, 1.0, 2.0]), np.ones(3)])
        res = solve_interval_qp(IntervalQP(A=A, lo=np.array([1.0, 1.0]),
                                           hi=np.array([1.0, 1.0])))
        np.testing.assert_allclose(res.weights, np.full(3, 1 / 3), atol=1e-12)

    def test_inconsistent_equalities_infeasible(self):
        A = np.column_stack([np.ones(4), np.ones(4)])
        res = solve_interval_qp(IntervalQP(A=A, lo=np.array([1.0, 2.0]),
                                           hi=np.array([1.0, 2.0])))
        assert res.status == "infeasible"


class TestActiveSet:
    def test_uniform_by_symmetry(self):
        A = np.ones((7, 1))
        res = solve_interval_qp(IntervalQP(A=A, lo=np.array([1.0]),
                                           hi=np.array([1.0]), nonneg=True))
        assert res.status == "optimal"
        np.testing.assert_allclose(res.weights, np.full(7, 1 / 7), atol=1e-10)

    def test_interval_slack_reduces_norm(self):
        rng = np.random.default_rng(9)
        qp = random_equality_qp(rng, n=12, k=3)
        tight = solve_interval_qp(qp)
        slack = solve_interval_qp(IntervalQP(A=qp.A, lo=qp.lo - 0.1,
                                             hi=qp.hi + 0.1))
        assert slack.status == "optimal"
        assert np.sum(slack.weights ** 2) <= np.sum(tight.weights ** 2) + 1e-12

    def test_nonneg_kkt_certificate(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n, k = int(rng.integers(6, 20)), int(rng.integers(1, 4))
            A = rng.normal(size=(n, k))
            w0 = rng.random(n)
            w0 /= w0.sum()
            b = A.T @ w0
            delta = np.abs(rng.normal(scale=0.05, size=k))
            A_full = np.column_stack([A, np.ones(n)])
            lo = np.concatenate([b - delta, [1.0]])
            hi = np.concatenate([b + delta, [1.0]])
            res = solve_interval_qp(IntervalQP(A=A_full, lo=lo, hi=hi, nonneg=True))
            assert res.status == "optimal"
            assert res.weights.min() >= -1e-12
            assert res.kkt_residual <= 1e-8
            vals = A_full.T @ res.weights
            assert (vals >= lo - 1e-8).all() and (vals <= hi + 1e-8).all()

    def test_nonneg_target_outside_hull_infeasible(self):
        # weights on x in {0, 1} with mean 2 cannot be nonnegative and sum to 1
        A = np.column_stack([np.array([0.0, 1.0]), np.ones(2)])
        res = solve_interval_qp(IntervalQP(A=A, lo=np.array([2.0, 1.0]),
                                           hi=np.array([2.0, 1.0]), nonneg=True))
        assert res.status == "infeasible"
        assert res.infeasibility["inflation"] > 0

    def test_active_set_matches_unconstrained_when_bounds_slack(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            qp = random_equality_qp(rng, n=15, k=3)
            free = solve_interval_qp(qp)
            if free.weights.min() < 0:
                continue
            nn = solve_interval_qp(IntervalQP(A=qp.A, lo=qp.lo, hi=qp.hi,
                                              nonneg=True))
            assert nn.status == "optimal"
            np.testing.assert_allclose(nn.weights, free.weights, atol=1e-8)

    def test_dual_signs(self):
        rng = np.random.default_rng(27)
        n = 10
        A = np.column_stack([rng.normal(size=n), np.ones(n)])
        target = np.array([2.0, 1.0])
        res = solve_interval_qp(IntervalQP(A=A, lo=target - np.array([0.1, 0.0]),
                                           hi=target + np.array([0.1, 0.0])))
        assert res.status == "optimal"
        # stationarity: w = A @ duals exactly
        np.testing.assert_allclose(res.weights, A @ res.duals, atol=1e-9)


class TestMinimalInflation:
    def test_bisection_finds_smallest_uniform_slack(self):
        # weighted mean of x in {0,1} pinned to 2 while the sum is pinned to 1:
        # widening both intervals by s allows sum 1+s and mean 2-s, feasible
        # exactly when s >= 1/2
        A = np.column_stack([np.array([0.0, 1.0]), np.ones(2)])
        qp = IntervalQP(A=A, lo=np.array([2.0, 1.0]), hi=np.array([2.0, 1.0]),
                        nonneg=True)
        info = minimal_inflation(qp)
        assert info["inflation"] == pytest.approx(0.5, abs=1e-6)
        assert info["most_violated"] is not None

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000), extra=st.floats(0.01, 1.0))
    def test_monotone_feasibility(self, seed, extra):
        """Widening every interval never turns a feasible problem infeasible."""
        rng = np.random.default_rng(seed)
        n, k = 8, 2
        A = np.column_stack([rng.normal(size=(n, k)), np.ones(n)])
        w0 = rng.random(n)
        w0 /= w0.sum()
        b = A.T @ w0
        base = IntervalQP(A=A, lo=b, hi=b, nonneg=True)
        assert solve_interval_qp(base).status == "optimal"
        wide = IntervalQP(A=A, lo=b - extra, hi=b + extra, nonneg=True)
        assert solve_interval_qp(wide).status == "optimal"
