"""Polynomial SGD regression: features, gradients, fits, ensembles."""

from __future__ import annotations

import numpy as np
import pytest

from flagtuner.linreg import (
    FeatureMap,
    LinearModel,
    SgdHyper,
    bootstrap_ensemble,
    fit_sgd,
    load_model,
    poly_features,
    save_model,
)


def _model(weights, degree=1, bias=True, n_inputs=1, y_mean=0.0, y_sd=1.0):
    fm = FeatureMap(degree=degree, include_bias=bias)
    return LinearModel(
        weights=np.asarray(weights, dtype=float), feature_map=fm,
        n_inputs=n_inputs, y_mean=y_mean, y_sd=y_sd,
    )


class TestFeatures:
    def test_degree_two_vector(self):
        # [1, x1, x2, x1^2, x2^2]
        assert poly_features(np.array([0.5, 1.0])).tolist() == [1.0, 0.5, 1.0, 0.25, 1.0]

    def test_interactions_appended_in_pair_order(self):
        out = poly_features(np.array([0.5, 1.0, 2.0]), include_interactions=True)
        # [1 | x | x^2 | x1x2, x1x3, x2x3]
        assert out.tolist() == [1, 0.5, 1, 2, 0.25, 1, 4, 0.5, 1.0, 2.0]

    def test_degree_one(self):
        assert poly_features(np.array([3.0, -1.0]), degree=1).tolist() == [1, 3, -1]

    def test_feature_count_matches(self):
        for d in (1, 2, 5, 9):
            x = np.arange(1, d + 1, dtype=float)
            for fm in (
                FeatureMap(degree=1),
                FeatureMap(degree=2),
                FeatureMap(degree=2, include_interactions=True),
                FeatureMap(degree=2, include_bias=False),
            ):
                assert fm.transform(x[None])[0].shape[0] == fm.n_features(d)

    def test_invalid_degree(self):
        with pytest.raises(ValueError, match="degree"):
            FeatureMap(degree=3)
        with pytest.raises(ValueError, match="interactions"):
            FeatureMap(degree=1, include_interactions=True)


class TestPredict:
    def test_hand_example(self):
        # f(x) = [1, x] . [1, 2] = 1 + 2x; at x=3 -> 7
        m = _model([1.0, 2.0])
        assert m.predict(np.array([3.0])) == pytest.approx(7.0, abs=1e-12)

    def test_zero_weights_predict_target_mean(self):
        m = _model([0.0, 0.0], y_mean=42.0, y_sd=3.0)
        assert m.predict(np.array([0.9])) == 42.0

    def test_matches_matmul_oracle(self):
        rng = np.random.default_rng(4)
        fm = FeatureMap(degree=2, include_interactions=True)
        X = rng.normal(size=(20, 3))
        w = rng.normal(size=fm.n_features(3))
        m = LinearModel(weights=w, feature_map=fm, n_inputs=3, y_mean=1.2, y_sd=2.5)
        expected = fm.transform(X) @ w * 2.5 + 1.2
        assert np.allclose(m.predict(X), expected, atol=1e-12)

    def test_input_width_checked(self):
        with pytest.raises(ValueError, match="inputs"):
            _model([1.0, 2.0]).predict(np.array([1.0, 2.0]))


class TestLossGradient:
    def test_zero_residual_zero_gradient(self):
        m = _model([1.0, 2.0])
        # prediction at x=3 is 7; label 7 -> gradient 0
        assert np.allclose(m.loss_gradient(np.array([3.0]), 7.0), 0.0)

    def test_hand_residual_times_features(self):
        # f = [1,1].[1,1] = 2, label 4 -> residual -2, phi = [1, 1]
        m = _model([1.0, 1.0])
        g = m.loss_gradient(np.array([1.0]), 4.0)
        assert g.tolist() == [-2.0, -2.0]

    def test_standardized_label_scale(self):
        # y_sd = 2, y_mean = 10: label 14 -> standardized 2
        m = _model([0.0, 0.0], y_mean=10.0, y_sd=2.0)
        g = m.loss_gradient(np.array([3.0]), 14.0)
        # residual = 0 - 2 = -2, phi = [1, 3] -> (-2, -6)
        assert g.tolist() == [-2.0, -6.0]

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        fm = FeatureMap(degree=2)
        for _ in range(10):
            w = rng.normal(size=fm.n_features(2))
            m = LinearModel(weights=w, feature_map=fm, n_inputs=2,
                            y_mean=float(rng.normal()), y_sd=1.7)
            x = rng.uniform(size=2)
            y = float(rng.normal())
            g = m.loss_gradient(x, y)

            def loss(weights):
                mm = LinearModel(weights=weights, feature_map=fm, n_inputs=2,
                                 y_mean=m.y_mean, y_sd=m.y_sd)
                z = (y - m.y_mean) / m.y_sd
                return 0.5 * float(mm.predict_standardized(x[None])[0] - z) ** 2

            fd = np.empty_like(w)
            eps = 1e-6
            for i in range(w.shape[0]):
                up, dn = w.copy(), w.copy()
                up[i] += eps
                dn[i] -= eps
                fd[i] = (loss(up) - loss(dn)) / (2 * eps)
            assert np.allclose(g, fd, atol=1e-5)


class TestFitSgd:
    def test_approaches_least_squares_on_linear_data(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(80, 2))
        y = 1.5 + 2 * X[:, 0] - 0.7 * X[:, 1]
        fm = FeatureMap(degree=1)
        m = fit_sgd(X, y, SgdHyper(epochs=400, seed=5), fm)
        pred = np.atleast_1d(m.predict(X))
        assert float(np.sqrt(np.mean((pred - y) ** 2))) < 0.05
        w_ols, *_ = np.linalg.lstsq(fm.transform(X), (y - y.mean()) / y.std(), rcond=None)
        assert np.max(np.abs(m.weights - w_ols)) < 0.05

    def test_bit_identical_given_seed(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(40, 3))
        y = rng.normal(size=40)
        a = fit_sgd(X, y, SgdHyper(seed=11))
        b = fit_sgd(X, y, SgdHyper(seed=11))
        assert np.array_equal(a.weights, b.weights)
        c = fit_sgd(X, y, SgdHyper(seed=12))
        assert not np.array_equal(a.weights, c.weights)

    def test_training_loss_non_increasing_in_epochs(self):
        # same seed => longer runs replay the same shuffle prefix
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, size=(60, 2))
        y = 0.5 + X[:, 0] - 2 * X[:, 1]
        fm = FeatureMap(degree=1)

        def loss_after(k: int) -> float:
            m = fit_sgd(X, y, SgdHyper(epochs=k, seed=9), fm)
            z = (y - m.y_mean) / m.y_sd
            r = m.predict_standardized(X) - z
            return 0.5 * float(np.mean(r ** 2))

        losses = [loss_after(k) for k in range(1, 21)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_constant_targets_sd_guard(self):
        X = np.linspace(0, 1, 10)[:, None]
        m = fit_sgd(X, np.full(10, 3.5), SgdHyper(epochs=50))
        assert m.y_sd == 1.0
        assert m.predict(np.array([0.3])) == pytest.approx(3.5, abs=1e-6)

    def test_input_validation(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_sgd(np.zeros((1, 2)), np.zeros(1))
        with pytest.raises(ValueError, match="targets"):
            fit_sgd(np.zeros((4, 2)), np.zeros(3))
        with pytest.raises(ValueError, match="finite"):
            fit_sgd(np.zeros((3, 2)), np.array([1.0, np.nan, 2.0]))


class TestEnsemble:
    def test_members_differ_but_agree_roughly(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, size=(120, 2))
        y = 2 + X[:, 0] + 0.5 * X[:, 1]
        ens = bootstrap_ensemble(X, y, n_members=6,
                                 hyper=SgdHyper(epochs=300), seed=5,
                                 feature_map=FeatureMap(degree=1))
        x = np.array([0.2, -0.4])
        preds = ens.member_predictions(x)
        assert preds.shape == (6,)
        assert len({w.tobytes() for w in (m.weights for m in ens.members)}) == 6
        assert float(np.std(preds)) < 0.2 * float(np.std(y))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(size=(30, 2))
        y = rng.normal(size=30)
        a = bootstrap_ensemble(X, y, n_members=3, seed=8, hyper=SgdHyper(epochs=20))
        b = bootstrap_ensemble(X, y, n_members=3, seed=8, hyper=SgdHyper(epochs=20))
        for ma, mb in zip(a.members, b.members):
            assert np.array_equal(ma.weights, mb.weights)

    def test_size_floor(self):
        with pytest.raises(ValueError, match=">= 2"):
            bootstrap_ensemble(np.zeros((5, 1)), np.zeros(5), n_members=1)


class TestSerialization:
    def test_json_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(25, 3))
        y = rng.normal(size=25)
        m = fit_sgd(X, y, SgdHyper(epochs=30))
        path = tmp_path / "model.json"
        save_model(m, str(path))
        back = load_model(str(path))
        assert np.array_equal(back.weights, m.weights)
        assert back.feature_map == m.feature_map
        assert (back.n_inputs, back.y_mean, back.y_sd) == (m.n_inputs, m.y_mean, m.y_sd)
        x = rng.uniform(size=3)
        assert back.predict(x) == m.predict(x)
