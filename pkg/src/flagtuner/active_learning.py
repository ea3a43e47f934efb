"""Batch-mode active learning for application characterization.

Labels come from running the target, so they are expensive; the loop spends
them where they change the model most.  The scorer is expected model change:
the norm of the SGD weight update a candidate would cause, averaged over a
bootstrap ensemble standing in for the unknown label.  Batches are picked
greedily, simulating the weight update between picks so one batch does not
collapse onto near-duplicate candidates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .executor import TrialExecutor, TrialRecord
from .flagspace import FlagSpace
from .linreg import (
    FeatureMap,
    LinearModel,
    ModelEnsemble,
    SgdHyper,
    bootstrap_ensemble,
    fit_sgd,
)

STRATEGIES = ("bemcm", "topk", "random")


@dataclass(frozen=True)
class AlBudget:
    """Knobs that bound the characterization loop."""

    batch_fraction: float = 0.03
    max_rounds: int = 10
    rel_rmse_eps: float = 0.01
    ensemble_size: int = 8
    max_wall_clock_s: float | None = None

    def __post_init__(self) -> None:
        if not (0 < self.batch_fraction <= 1):
            raise ValueError("batch_fraction must be in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.rel_rmse_eps < 0:
            raise ValueError("rel_rmse_eps must be >= 0")
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be >= 2")
        if self.max_wall_clock_s is not None and self.max_wall_clock_s <= 0:
            raise ValueError("max_wall_clock_s must be positive")


@dataclass
class AlState:
    """What batch selection needs: current model, ensemble, candidate pool."""

    model: LinearModel
    ensemble: ModelEnsemble
    pool_X: np.ndarray
    learning_rate: float = 0.01


def _member_std_predictions(
    model: LinearModel, ensemble: ModelEnsemble, X: np.ndarray
) -> np.ndarray:
    """Ensemble predictions re-expressed on the main model's standardized scale."""
    raw = ensemble.member_predictions(X)  # (Z, m) original units
    return (np.atleast_2d(raw) - model.y_mean) / model.y_sd


def expected_model_change(
    model: LinearModel, ensemble: ModelEnsemble, x: np.ndarray
) -> float:
    """Mean norm of the would-be SGD update at ``x`` over ensemble labels.

    For each ensemble member's prediction ``y_z`` (standing in for the true
    label), the SGD step would move the weights by ``(f(x) - y_z) phi(x)``;
    the score is the mean of the norms of those updates.  Zero exactly when
    every member agrees with the model at ``x``.
    """
    x = np.asarray(x, dtype=float)
    phi = model.feature_map.transform(x[None, :])[0]
    f_std = float(phi @ model.weights)
    member_std = _member_std_predictions(model, ensemble, x[None, :])[:, 0]
    return float(np.mean(np.abs(f_std - member_std)) * np.linalg.norm(phi))


def select_batch(
    state: AlState,
    k: int,
    strategy: str = "bemcm",
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Pick ``k`` pool indices by the given strategy.

    ``bemcm`` picks greedily, applying a simulated SGD update (with the
    ensemble-mean prediction as pseudo label) after each pick so later picks
    see the changed model.  ``topk`` ranks once without updates; ``random``
    samples uniformly.  Ties break toward the lower index.
    """
    pool = np.atleast_2d(np.asarray(state.pool_X, dtype=float))
    m = pool.shape[0]
    if m == 0:
        raise ValueError("empty candidate pool")
    if not (1 <= k <= m):
        raise ValueError(f"k must be in [1, {m}], got {k}")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")

    if strategy == "random":
        if rng is None:
            raise ValueError("random strategy needs an rng")
        return [int(i) for i in rng.choice(m, size=k, replace=False)]

    model = state.model
    phi = model.feature_map.transform(pool)  # (m, p)
    norms = np.linalg.norm(phi, axis=1)
    member_std = _member_std_predictions(model, state.ensemble, pool)  # (Z, m)

    if strategy == "topk":
        f_std = phi @ model.weights
        scores = np.mean(np.abs(f_std[None, :] - member_std), axis=0) * norms
        return [int(i) for i in np.argsort(-scores, kind="stable")[:k]]

    pseudo = member_std.mean(axis=0)  # greedy pseudo-labels
    w = model.weights.copy()
    available = np.ones(m, dtype=bool)
    picked: list[int] = []
    for _ in range(k):
        idx = np.flatnonzero(available)
        f_std = phi[idx] @ w
        scores = np.mean(np.abs(f_std[None, :] - member_std[:, idx]), axis=0)
        scores *= norms[idx]
        best = int(idx[int(np.argmax(scores))])  # argmax keeps lowest index on ties
        picked.append(best)
        available[best] = False
        w = w - state.learning_rate * (phi[best] @ w - pseudo[best]) * phi[best]
    return picked


@dataclass(frozen=True)
class AlReport:
    """Loop accounting: per-round errors, label counts, why it stopped."""

    strategy: str
    rounds_run: int
    batch_size: int
    rmse_initial: float
    rmse_history: tuple[float, ...]
    labels_per_round: tuple[int, ...]
    n_seed: int
    n_test: int
    n_pool: int
    executed_trials: int
    failed_trials: int
    stop_reason: str

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "rounds_run": self.rounds_run,
            "batch_size": self.batch_size,
            "rmse_initial": self.rmse_initial,
            "rmse_history": list(self.rmse_history),
            "labels_per_round": list(self.labels_per_round),
            "n_seed": self.n_seed,
            "n_test": self.n_test,
            "n_pool": self.n_pool,
            "executed_trials": self.executed_trials,
            "failed_trials": self.failed_trials,
            "stop_reason": self.stop_reason,
        }


@dataclass
class AlResult:
    """Labeled dataset, fitted model/ensemble, and the loop report."""

    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    model: LinearModel
    ensemble: ModelEnsemble
    records: list[TrialRecord]
    report: AlReport


def _pick_metric(record: TrialRecord, metric: str | None) -> str:
    if metric is not None:
        if metric not in record.metrics:
            raise ValueError(f"trial record has no metric {metric!r}")
        return metric
    if len(record.metrics) != 1:
        raise ValueError(
            "metric must be named when trials report multiple metrics"
        )
    return next(iter(record.metrics))


def run_al_loop(
    space: FlagSpace,
    executor: TrialExecutor,
    budget: AlBudget | None = None,
    seed: int = 0,
    n_candidates: int = 400,
    seed_fraction: float = 0.1,
    test_fraction: float = 0.2,
    metric: str | None = None,
    sgd: SgdHyper | None = None,
    feature_map: FeatureMap | None = None,
    strategy: str = "bemcm",
) -> AlResult:
    """Characterize the target: label a seed set, then batch-active-learn.

    A seeded uniform candidate set is split into seed (labeled up front),
    held-out test (labeled, measures RMSE) and pool portions.  Each round
    selects a batch from the pool, labels it, refits model and ensemble, and
    stops on relative test-RMSE plateau, round budget, wall-clock budget or
    pool exhaustion.  Failed trials are recorded but never become labels;
    their pool slots are consumed so no point is ever selected twice.
    """
    budget = budget or AlBudget()
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not (0 < seed_fraction < 1 and 0 < test_fraction < 1):
        raise ValueError("fractions must be in (0, 1)")
    dim = space.dimension
    rng = np.random.default_rng(seed)
    candidates = rng.uniform(size=(n_candidates, dim))
    n_seed = max(2, int(round(seed_fraction * n_candidates)))
    n_test = max(1, int(round(test_fraction * n_candidates)))
    if n_seed + n_test >= n_candidates:
        raise ValueError(
            f"{n_candidates} candidates leave no pool after "
            f"{n_seed} seed + {n_test} test points"
        )

    records: list[TrialRecord] = []
    failed = 0
    metric_name = metric

    def run_one(x: np.ndarray) -> tuple[np.ndarray, float] | None:
        nonlocal failed, metric_name
        trial_seed = int(rng.integers(2**31))
        config = space.decode(x)
        record = executor.run(space, config, seed=trial_seed)
        records.append(record)
        if not record.ok:
            failed += 1
            return None
        metric_name = _pick_metric(record, metric_name)
        return space.encode(record.config), float(record.metrics[metric_name])

    start = time.monotonic()
    train_X: list[np.ndarray] = []
    train_y: list[float] = []
    for x in candidates[:n_seed]:
        labeled = run_one(x)
        if labeled is not None:
            train_X.append(labeled[0])
            train_y.append(labeled[1])
    if len(train_y) < 2:
        raise RuntimeError(
            "cannot characterize target: fewer than 2 seed trials succeeded"
        )

    test_X: list[np.ndarray] = []
    test_y: list[float] = []
    for x in candidates[n_seed : n_seed + n_test]:
        labeled = run_one(x)
        if labeled is not None:
            test_X.append(labeled[0])
            test_y.append(labeled[1])
    if not test_y:
        raise RuntimeError("cannot characterize target: all test trials failed")

    pool = candidates[n_seed + n_test :]
    n_pool = pool.shape[0]
    batch_size = max(1, int(round(budget.batch_fraction * n_pool)))
    sgd = sgd or SgdHyper()

    def refit(round_idx: int) -> tuple[LinearModel, ModelEnsemble]:
        s_fit, s_ens = np.random.SeedSequence([seed, round_idx]).generate_state(2)
        X = np.vstack(train_X)
        y = np.asarray(train_y)
        model = fit_sgd(X, y, replace(sgd, seed=int(s_fit)), feature_map)
        ens = bootstrap_ensemble(
            X, y, budget.ensemble_size, sgd, feature_map, seed=int(s_ens)
        )
        return model, ens

    def test_rmse(model: LinearModel) -> float:
        pred = np.atleast_1d(model.predict(np.vstack(test_X)))
        return float(np.sqrt(np.mean((pred - np.asarray(test_y)) ** 2)))

    model, ensemble = refit(0)
    rmse_prev = test_rmse(model)
    rmse_initial = rmse_prev
    rmse_history: list[float] = []
    labels_per_round: list[int] = []
    rounds = 0
    stop_reason = "max rounds"
    for round_idx in range(1, budget.max_rounds + 1):
        if (
            budget.max_wall_clock_s is not None
            and time.monotonic() - start > budget.max_wall_clock_s
        ):
            stop_reason = "wall clock budget"
            break
        if pool.shape[0] == 0:
            stop_reason = "pool exhausted"
            break
        k = min(batch_size, pool.shape[0])
        state = AlState(model, ensemble, pool, learning_rate=sgd.learning_rate)
        chosen = select_batch(state, k, strategy=strategy, rng=rng)
        for i in chosen:
            labeled = run_one(pool[i])
            if labeled is not None:
                train_X.append(labeled[0])
                train_y.append(labeled[1])
        pool = np.delete(pool, chosen, axis=0)
        model, ensemble = refit(round_idx)
        rounds = round_idx
        rmse = test_rmse(model)
        rmse_history.append(rmse)
        labels_per_round.append(len(train_y))
        if abs(rmse - rmse_prev) / max(rmse_prev, 1e-12) < budget.rel_rmse_eps:
            stop_reason = "rmse plateau"
            break
        rmse_prev = rmse

    report = AlReport(
        strategy=strategy,
        rounds_run=rounds,
        batch_size=batch_size,
        rmse_initial=rmse_initial,
        rmse_history=tuple(rmse_history),
        labels_per_round=tuple(labels_per_round),
        n_seed=n_seed,
        n_test=n_test,
        n_pool=n_pool,
        executed_trials=len(records),
        failed_trials=failed,
        stop_reason=stop_reason,
    )
    return AlResult(
        train_X=np.vstack(train_X),
        train_y=np.asarray(train_y),
        test_X=np.vstack(test_X),
        test_y=np.asarray(test_y),
        model=model,
        ensemble=ensemble,
        records=records,
        report=report,
    )
