"""Lasso-based selection of the flags that actually move the metric.

Fits ``min_w (1/2n) ||y - Xw - b||^2 + lambda ||w||_1`` by cyclic coordinate
descent with soft thresholding (intercept unpenalized, handled by centering).
Flags whose weight survives the L1 penalty form the selected subset that the
tuning stage searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flagspace import FlagSpace


@dataclass(frozen=True)
class LassoFit:
    """Coordinate-descent result on standardized targets.

    ``weights`` are on the scale (centered X) -> (standardized y); use
    :meth:`predict` for original units.  ``objective_history`` holds the
    penalized objective after each full sweep.
    """

    weights: np.ndarray
    lambda_: float
    n_iter: int
    converged: bool
    x_offset: np.ndarray
    y_mean: float
    y_sd: float
    objective_history: tuple[float, ...]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights != 0.0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.y_mean + self.y_sd * ((X - self.x_offset) @ self.weights)


def _soft_threshold(v: float, t: float) -> float:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lambda_: float,
    tol: float = 1e-6,
    max_sweeps: int = 1000,
) -> LassoFit:
    """Cyclic coordinate descent for the L1-penalized least-squares problem.

    Features are centered, targets standardized; each coordinate update is
    the exact single-coordinate minimizer (soft threshold).  Converged when
    the largest coordinate change in a sweep drops below ``tol``.
    Zero-variance columns keep weight zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n != y.shape[0]:
        raise ValueError(f"{n} rows but {y.shape[0]} targets")
    if n < 2:
        raise ValueError("need at least 2 examples")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite training data")
    if lambda_ < 0:
        raise ValueError("lambda must be >= 0")

    x_offset = X.mean(axis=0)
    Xc = X - x_offset
    y_mean = float(np.mean(y))
    y_sd = float(np.std(y))
    if y_sd == 0.0:
        y_sd = 1.0
    z = (y - y_mean) / y_sd

    col_sq = np.einsum("ij,ij->j", Xc, Xc) / n  # (1/n) sum_i x_ij^2
    w = np.zeros(d)
    r = z.copy()  # residual z - Xc w
    history: list[float] = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        for j in range(d):
            cj = col_sq[j]
            if cj == 0.0:
                continue
            wj = w[j]
            rho = (Xc[:, j] @ r) / n + cj * wj
            new = _soft_threshold(rho, lambda_) / cj
            delta = new - wj
            if delta != 0.0:
                r -= delta * Xc[:, j]
                w[j] = new
                max_delta = max(max_delta, abs(delta))
        history.append(float(0.5 * (r @ r) / n + lambda_ * np.sum(np.abs(w))))
        if max_delta < tol:
            converged = True
            break
    return LassoFit(
        weights=w, lambda_=float(lambda_), n_iter=sweeps, converged=converged,
        x_offset=x_offset, y_mean=y_mean, y_sd=y_sd,
        objective_history=tuple(history),
    )


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest lambda at which the lasso solution is identically zero."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    Xc = X - X.mean(axis=0)
    y_sd = float(np.std(y))
    if y_sd == 0.0:
        y_sd = 1.0
    z = (y - np.mean(y)) / y_sd
    return float(np.max(np.abs(Xc.T @ z)) / X.shape[0])


def grid_search_lambda(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[float],
    folds: int = 5,
    seed: int = 0,
    tol: float = 1e-6,
    max_sweeps: int = 1000,
) -> tuple[float, dict[float, float]]:
    """Pick lambda by k-fold cross-validated MSE (ties -> smaller lambda).

    Returns the winning lambda and the per-lambda mean validation MSE.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty lambda grid")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < folds:
        raise ValueError(f"need at least {folds} examples for {folds}-fold CV")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    parts = np.array_split(order, folds)

    scores: dict[float, float] = {}
    for lam in grid:
        errs = []
        for k in range(folds):
            val = parts[k]
            train = np.concatenate([parts[i] for i in range(folds) if i != k])
            fit = fit_lasso(X[train], y[train], lam, tol=tol, max_sweeps=max_sweeps)
            pred = fit.predict(X[val])
            errs.append(float(np.mean((pred - y[val]) ** 2)))
        scores[lam] = float(np.mean(errs))
    best = grid[0]
    for lam in grid[1:]:
        if scores[lam] < scores[best]:  # strict: ties keep the smaller lambda
            best = lam
    return best, scores


@dataclass(frozen=True)
class FlagSubset:
    """Selected flag names (space order) plus how they were chosen."""

    names: tuple[str, ...]
    parent_dimension: int
    fallback: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise ValueError("empty flag subset")


def select_flags(
    fit: LassoFit, space: FlagSpace, threshold: float = 0.0
) -> FlagSubset:
    """Flags whose lasso weight magnitude exceeds ``threshold``.

    If nothing survives, falls back to the top 10% of flags by weight
    magnitude (at least one) and marks the subset accordingly, so the tuning
    stage never receives an empty space.
    """
    active = space.active_flags
    if len(active) != fit.weights.shape[0]:
        raise ValueError(
            f"fit has {fit.weights.shape[0]} weights for {len(active)} active flags"
        )
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    mags = np.abs(fit.weights)
    picked = np.flatnonzero(mags > threshold)
    fallback = False
    if picked.size == 0:
        k = max(1, math.ceil(0.1 * len(active)))
        picked = np.sort(np.argsort(-mags, kind="stable")[:k])
        fallback = True
    names = tuple(active[i].name for i in picked)
    return FlagSubset(names=names, parent_dimension=len(active), fallback=fallback)
