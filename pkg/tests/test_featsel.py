"""Lasso coordinate descent and flag selection."""

from __future__ import annotations

import numpy as np
import pytest
from sklearn.linear_model import Lasso as SkLasso

from flagtuner.featsel import (
    FlagSubset,
    fit_lasso,
    grid_search_lambda,
    lambda_max,
    select_flags,
)
from flagtuner.flagspace import unit_space


def _problem(seed, n=120, d=8, support=(0, 3), coef=(2.0, -1.5), noise=0.05):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    y = 1.0 + rng.normal(0, noise, size=n)
    for j, c in zip(support, coef):
        y += c * X[:, j]
    return X, y


class TestFitLasso:
    def test_zero_penalty_equals_least_squares(self):
        X, y = _problem(0, n=60, d=4)
        fit = fit_lasso(X, y, 0.0, tol=1e-12, max_sweeps=20000)
        ones_X = np.hstack([np.ones((60, 1)), X])
        beta, *_ = np.linalg.lstsq(ones_X, y, rcond=None)
        pred_ols = ones_X @ beta
        assert np.allclose(fit.predict(X), pred_ols, atol=1e-6)

    def test_weights_match_independent_solver(self):
        # oracle: scikit-learn coordinate descent on the same standardized
        # problem minimizes the identical (1/2n)||.||^2 + lambda ||.||_1
        for seed in range(5):
            X, y = _problem(seed, n=100, d=6)
            z = (y - y.mean()) / y.std()
            for lam in (0.01, 0.05, 0.2):
                mine = fit_lasso(X, y, lam, tol=1e-10, max_sweeps=50000)
                ref = SkLasso(alpha=lam, fit_intercept=True, tol=1e-12,
                              max_iter=100000).fit(X, z)
                assert np.allclose(mine.weights, ref.coef_, atol=1e-5)

    def test_lambda_max_kills_all_weights(self):
        X, y = _problem(3)
        lam_max = lambda_max(X, y)
        assert np.all(fit_lasso(X, y, lam_max * 1.0001).weights == 0.0)
        assert np.any(fit_lasso(X, y, lam_max * 0.9).weights != 0.0)

    def test_recovers_sparse_support(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(size=(200, 10))
        y = 3.0 * X[:, 0] + rng.normal(0, 0.01, size=200)
        fit = fit_lasso(X, y, 0.05)
        assert fit.support.tolist() == [0]

    def test_objective_never_increases_across_sweeps(self):
        for seed in range(4):
            X, y = _problem(seed, d=12, noise=0.3)
            fit = fit_lasso(X, y, 0.02, tol=1e-10)
            hist = np.asarray(fit.objective_history)
            assert np.all(np.diff(hist) <= 1e-12)

    def test_zero_variance_column_gets_zero_weight(self):
        X, y = _problem(5, d=5)
        X[:, 2] = 7.0
        fit = fit_lasso(X, y, 0.01)
        assert fit.weights[2] == 0.0

    def test_sparsity_monotone_in_lambda(self):
        X, y = _problem(6, d=10, noise=0.2)
        sizes = [
            fit_lasso(X, y, lam).support.size
            for lam in (0.001, 0.01, 0.05, 0.2, 1.0)
        ]
        assert all(b <= a for a, b in zip(sizes, sizes[1:]))

    def test_convergence_flag_and_sweep_cap(self):
        X, y = _problem(7, d=6)
        fit = fit_lasso(X, y, 1e-6, tol=1e-14, max_sweeps=2)
        assert fit.n_iter == 2
        assert not fit.converged
        assert len(fit.objective_history) == 2

    def test_validation(self):
        with pytest.raises(ValueError, match="lambda"):
            fit_lasso(np.zeros((4, 2)), np.zeros(4), -0.1)
        with pytest.raises(ValueError, match="at least 2"):
            fit_lasso(np.zeros((1, 2)), np.zeros(1), 0.1)
        with pytest.raises(ValueError, match="finite"):
            fit_lasso(np.full((3, 2), np.nan), np.zeros(3), 0.1)


class TestGridSearch:
    def test_single_candidate_returns_itself(self):
        X, y = _problem(8)
        lam, scores = grid_search_lambda(X, y, [0.03], folds=3)
        assert lam == 0.03
        assert set(scores) == {0.03}

    def test_picks_low_error_lambda_on_sparse_problem(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(size=(150, 12))
        y = 2.5 * X[:, 1] - 1.0 * X[:, 7] + rng.normal(0, 0.05, size=150)
        lam, scores = grid_search_lambda(X, y, [0.005, 0.05, 0.5, 5.0], folds=5, seed=1)
        assert lam in (0.005, 0.05)
        assert scores[lam] == min(scores.values())

    def test_tie_prefers_smaller_lambda(self):
        # constant y: every lambda gives all-zero weights -> identical CV error
        X = np.linspace(0, 1, 30)[:, None]
        y = np.full(30, 2.0)
        lam, scores = grid_search_lambda(X, y, [0.9, 0.1, 0.5], folds=3)
        assert lam == 0.1
        assert len(set(round(v, 12) for v in scores.values())) == 1

    def test_deterministic_given_seed(self):
        X, y = _problem(10, d=6)
        a = grid_search_lambda(X, y, [0.01, 0.1], folds=4, seed=3)
        b = grid_search_lambda(X, y, [0.01, 0.1], folds=4, seed=3)
        assert a == b

    def test_validation(self):
        X, y = _problem(11)
        with pytest.raises(ValueError, match="empty"):
            grid_search_lambda(X, y, [])
        with pytest.raises(ValueError, match="folds"):
            grid_search_lambda(X, y, [0.1], folds=1)
        with pytest.raises(ValueError, match="examples"):
            grid_search_lambda(X[:3], y[:3], [0.1], folds=5)


class _FakeFit:
    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=float)


class TestSelectFlags:
    def test_positive_weights_selected_by_name(self):
        space = unit_space(3)
        sub = select_flags(_FakeFit([0.0, 0.5, 0.0]), space)
        assert sub.names == ("x1",)
        assert not sub.fallback

    def test_threshold_filters_small_weights(self):
        space = unit_space(4)
        sub = select_flags(_FakeFit([0.05, -0.5, 0.2, 0.0]), space, threshold=0.1)
        assert sub.names == ("x1", "x2")

    def test_all_zero_falls_back_to_top_tenth(self):
        space = unit_space(30)
        sub = select_flags(_FakeFit(np.zeros(30)), space)
        assert sub.fallback
        assert len(sub.names) == 3  # ceil(0.1 * 30)

    def test_fallback_takes_largest_magnitudes(self):
        space = unit_space(20)
        w = np.zeros(20)
        w[4], w[11] = 1e-12, -2e-12  # below default threshold 0 is false; use threshold
        sub = select_flags(_FakeFit(w), space, threshold=1e-9)
        assert sub.fallback
        assert set(sub.names) == {"x4", "x11"}

    def test_weight_count_must_match_space(self):
        with pytest.raises(ValueError, match="weights"):
            select_flags(_FakeFit([0.1, 0.2]), unit_space(3))

    def test_subset_is_ordered_like_space(self):
        space = unit_space(6)
        sub = select_flags(_FakeFit([0.3, 0.0, -0.2, 0.0, 0.9, 0.0]), space)
        assert sub.names == ("x0", "x2", "x4")
        assert sub.parent_dimension == 6

    def test_empty_subset_impossible(self):
        with pytest.raises(ValueError, match="empty"):
            FlagSubset(names=(), parent_dimension=4)
