"""Polynomial-feature linear models trained with minibatch SGD.

The model is linear in its feature vector, ``f(x) = W . phi(x)``, trained by
stochastic gradient descent on squared error over standardized targets.  The
per-example gradient is ``(f(x) - y) * phi(x)``, which is also the quantity
the active-learning scorer measures.  Bootstrap ensembles of these models
estimate the prediction distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np


@dataclass(frozen=True)
class FeatureMap:
    """Polynomial feature expansion: bias, linears, squares, optional pairs.

    Feature order for input ``(x1, .., xd)`` at degree 2:
    ``[1, x1, .., xd, x1^2, .., xd^2]`` followed, when
    ``include_interactions`` is set, by the pairwise products
    ``x_i * x_j`` for ``i < j`` in lexicographic order.
    """

    degree: int = 2
    include_interactions: bool = False
    include_bias: bool = True

    def __post_init__(self) -> None:
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if self.include_interactions and self.degree < 2:
            raise ValueError("interactions require degree 2")

    def n_features(self, n_inputs: int) -> int:
        n = n_inputs + (1 if self.include_bias else 0)
        if self.degree == 2:
            n += n_inputs
            if self.include_interactions:
                n += n_inputs * (n_inputs - 1) // 2
        return n

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, d = X.shape
        cols = []
        if self.include_bias:
            cols.append(np.ones((n, 1)))
        cols.append(X)
        if self.degree == 2:
            cols.append(X**2)
            if self.include_interactions:
                pairs = [
                    (X[:, i] * X[:, j])[:, None]
                    for i in range(d)
                    for j in range(i + 1, d)
                ]
                cols.extend(pairs)
        return np.hstack(cols)


def poly_features(
    x: np.ndarray, degree: int = 2, include_interactions: bool = False
) -> np.ndarray:
    """Feature vector of a single input point."""
    fm = FeatureMap(degree=degree, include_interactions=include_interactions)
    return fm.transform(np.asarray(x, dtype=float)[None, :])[0]


@dataclass(frozen=True)
class SgdHyper:
    """SGD training hyperparameters."""

    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class LinearModel:
    """Weights over a polynomial feature map plus target standardization."""

    weights: np.ndarray
    feature_map: FeatureMap
    n_inputs: int
    y_mean: float
    y_sd: float

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_inputs:
            raise ValueError(
                f"expected {self.n_inputs} inputs, got {X.shape[1]}"
            )
        return X

    def predict(self, x: np.ndarray) -> float | np.ndarray:
        """Predict in original target units (scalar for a single point)."""
        single = np.asarray(x).ndim == 1
        X = self._check(x)
        out = self.feature_map.transform(X) @ self.weights * self.y_sd + self.y_mean
        return float(out[0]) if single else out

    def predict_standardized(self, x: np.ndarray) -> np.ndarray:
        """Predictions on the model's internal standardized scale."""
        X = self._check(x)
        return self.feature_map.transform(X) @ self.weights

    def loss_gradient(self, x: np.ndarray, y: float) -> np.ndarray:
        """Squared-error gradient w.r.t. the weights at one labeled example.

        ``y`` is in original units; the gradient lives on the standardized
        scale the weights are trained on: ``(f(x) - y_std) * phi(x)``.
        """
        X = self._check(np.asarray(x, dtype=float))
        phi = self.feature_map.transform(X)[0]
        y_std = (float(y) - self.y_mean) / self.y_sd
        return (phi @ self.weights - y_std) * phi

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "feature_map": {
                "degree": self.feature_map.degree,
                "include_interactions": self.feature_map.include_interactions,
                "include_bias": self.feature_map.include_bias,
            },
            "n_inputs": self.n_inputs,
            "y_mean": self.y_mean,
            "y_sd": self.y_sd,
        }

    @staticmethod
    def from_dict(doc: dict[str, Any]) -> "LinearModel":
        fm = FeatureMap(**doc["feature_map"])
        return LinearModel(
            weights=np.asarray(doc["weights"], dtype=float),
            feature_map=fm,
            n_inputs=int(doc["n_inputs"]),
            y_mean=float(doc["y_mean"]),
            y_sd=float(doc["y_sd"]),
        )


def save_model(model: LinearModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_model(path: str) -> LinearModel:
    with open(path, "r", encoding="utf-8") as fh:
        return LinearModel.from_dict(json.load(fh))


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(np.mean(y))
    sd = float(np.std(y))
    if sd == 0.0 or not np.isfinite(sd):
        sd = 1.0
    return (y - mean) / sd, mean, sd


def fit_sgd(
    X: np.ndarray,
    y: np.ndarray,
    hyper: SgdHyper | None = None,
    feature_map: FeatureMap | None = None,
) -> LinearModel:
    """Fit a polynomial linear model by minibatch SGD on standardized targets.

    Weights start at zero; each epoch visits a fresh seeded shuffle of the
    data in minibatches, stepping down the mean squared-error gradient.
    Identical inputs and seed give bit-identical weights.
    """
    hyper = hyper or SgdHyper()
    fm = feature_map or FeatureMap()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n != y.shape[0]:
        raise ValueError(f"{n} rows but {y.shape[0]} targets")
    if n < 2:
        raise ValueError("need at least 2 training examples")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite training data")

    z, y_mean, y_sd = _standardize(y)
    phi = fm.transform(X)
    w = np.zeros(phi.shape[1])
    rng = np.random.default_rng(hyper.seed)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            pb = phi[idx]
            grad = pb.T @ (pb @ w - z[idx]) / idx.shape[0]
            w -= hyper.learning_rate * grad
    return LinearModel(weights=w, feature_map=fm, n_inputs=d, y_mean=y_mean, y_sd=y_sd)


@dataclass(frozen=True)
class ModelEnsemble:
    """Bootstrap ensemble of models sharing one feature map."""

    members: tuple[LinearModel, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        if len(self.members) < 2:
            raise ValueError("ensemble needs at least 2 members")
        fm = self.members[0].feature_map
        if any(m.feature_map != fm for m in self.members):
            raise ValueError("ensemble members must share a feature map")

    @property
    def size(self) -> int:
        return len(self.members)

    def member_predictions(self, x: np.ndarray) -> np.ndarray:
        """Per-member predictions, original units; shape (Z,) or (Z, n)."""
        single = np.asarray(x).ndim == 1
        preds = np.stack([np.atleast_1d(m.predict(x)) for m in self.members])
        return preds[:, 0] if single else preds


def bootstrap_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    n_members: int = 8,
    hyper: SgdHyper | None = None,
    feature_map: FeatureMap | None = None,
    seed: int = 0,
) -> ModelEnsemble:
    """Fit ``n_members`` models on bootstrap resamples of ``(X, y)``.

    Resample draws and member SGD seeds derive from ``seed`` via independent
    seed-sequence children, so the ensemble is reproducible as a whole.
    """
    if n_members < 2:
        raise ValueError("n_members must be >= 2")
    hyper = hyper or SgdHyper()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    members = []
    for child in np.random.SeedSequence(seed).spawn(n_members):
        s1, s2 = child.generate_state(2)
        rng = np.random.default_rng(s1)
        idx = rng.integers(0, n, size=n)
        member_hyper = replace(hyper, seed=int(s2))
        members.append(fit_sgd(X[idx], y[idx], member_hyper, feature_map))
    return ModelEnsemble(tuple(members))
