"""Tuning loops that search a flag subspace for the best configuration.

Four strategies share one accounting scheme:

- ``tune_bo``: GP-based Bayesian optimization from a Sobol initial design.
- ``tune_bo_warm``: the same loop, but the GP starts from an existing
  labeled dataset (e.g. the characterization stage's) instead of spending
  real executions on an initial design.
- ``tune_rbo``: runs the whole search against a fitted regression model and
  spends real executions only to confirm the predicted best point.
- ``tune_sa``: simulated annealing baseline.

All strategies measure the default configuration exactly once, keep it out
of the search data, and use it as a final guard: if nothing strictly beats
it, the default is returned with speedup exactly 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .executor import TrialExecutor, TrialRecord
from .flagspace import Configuration, FlagSpace
from .linreg import LinearModel
from .surrogate import (
    MATERN52,
    Acquisition,
    GpSurrogate,
    gp_fit,
    lhs,
    maximize_acquisition,
    sobol,
)

ALGORITHMS = ("bo", "bo-warm", "rbo", "sa")
_ALGO_TAGS = {"bo": 1, "bo-warm": 2, "rbo": 3, "sa": 4}


@dataclass
class TuneTask:
    """What to tune: the subspace, the executor, the objective, the budgets."""

    space: FlagSpace
    executor: TrialExecutor
    metric: str
    direction: str = "min"
    budget: int = 20
    init_size: int = 8
    seed: int = 0
    kernel: str = MATERN52
    gp_restarts: int = 5
    xi: float = 0.01
    acq_candidates: int = 1024

    def __post_init__(self) -> None:
        if self.direction not in ("min", "max"):
            raise ValueError(f"direction must be 'min' or 'max', got {self.direction!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.init_size < 2:
            raise ValueError("init_size must be >= 2")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")


@dataclass(frozen=True)
class TrajectoryPoint:
    """One evaluation: its value and the best value seen up to that point."""

    iteration: int
    phase: str  # init | warm | search | model | confirm
    value: float
    incumbent: float
    measured: bool = True
    ok: bool = True

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "phase": self.phase,
            "value": self.value,
            "incumbent": self.incumbent,
            "measured": self.measured,
            "ok": self.ok,
        }


@dataclass
class TuningReport:
    """Outcome of one tuning run, with explicit execution accounting.

    ``real_executions`` counts target runs spent by the search itself
    (initial design + loop + confirmations); the single default baseline run
    is tracked separately in ``default_runs``.
    """

    algorithm: str
    metric: str
    direction: str
    seed: int
    best_config: Configuration
    best_value: float
    default_config: Configuration
    default_value: float
    speedup: float
    trajectory: tuple[TrajectoryPoint, ...]
    real_executions: int
    default_runs: int
    total_executions: int
    gp_log: tuple[dict[str, Any], ...] = ()
    predicted_value: float | None = None
    confirmed_value: float | None = None
    used_default_guard: bool = False
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "metric": self.metric,
            "direction": self.direction,
            "seed": self.seed,
            "best_config": dict(self.best_config.assignments),
            "best_value": self.best_value,
            "default_config": dict(self.default_config.assignments),
            "default_value": self.default_value,
            "speedup": self.speedup,
            "trajectory": [p.to_dict() for p in self.trajectory],
            "real_executions": self.real_executions,
            "default_runs": self.default_runs,
            "total_executions": self.total_executions,
            "gp_log": list(self.gp_log),
            "predicted_value": self.predicted_value,
            "confirmed_value": self.confirmed_value,
            "used_default_guard": self.used_default_guard,
            "notes": list(self.notes),
        }


# --- shared machinery ---------------------------------------------------------


def _seed_stream(seed: int, algorithm: str):
    state = np.random.SeedSequence([seed, _ALGO_TAGS[algorithm]]).generate_state(4096)
    it = iter(state)
    return lambda: int(next(it))


def _signed(value: float, direction: str) -> float:
    return value if direction == "min" else -value


def _raw(internal: float, direction: str) -> float:
    return internal if direction == "min" else -internal


def _penalty(worst_internal: float) -> float:
    """A value strictly worse (larger, internal scale) than anything seen."""
    if worst_internal > 0:
        return worst_internal * 1.5
    if worst_internal < 0:
        return worst_internal / 1.5
    return 1.0


class _Runner:
    """Executes configs, tracks counts and the worst value for penalties."""

    def __init__(self, task: TuneTask, next_seed):
        self.task = task
        self.next_seed = next_seed
        self.real_executions = 0
        self.worst: float | None = None

    def measure(self, config: Configuration) -> tuple[float | None, TrialRecord]:
        """Run one real trial; returns (internal value | None on failure)."""
        record = self.task.executor.run(
            self.task.space, config, seed=self.next_seed()
        )
        self.real_executions += 1
        if not record.ok:
            return None, record
        value = _signed(float(record.metrics[self.task.metric]), self.task.direction)
        if self.worst is None or value > self.worst:
            self.worst = value
        return value, record

    def penalty(self) -> float:
        if self.worst is None:
            raise RuntimeError("no successful trial to derive a penalty from")
        return _penalty(self.worst)


def _measure_default(task: TuneTask, runner_seed) -> tuple[Configuration, float]:
    config = task.space.default_configuration()
    record = task.executor.run(task.space, config, seed=runner_seed())
    if not record.ok:
        raise RuntimeError(f"default configuration failed: {record.note or record.status}")
    return config, float(record.metrics[task.metric])


def _beats(candidate: float, reference: float, direction: str) -> bool:
    return candidate < reference if direction == "min" else candidate > reference


def _finish(
    task: TuneTask,
    algorithm: str,
    best_config: Configuration,
    best_value: float,
    default_config: Configuration,
    default_value: float,
    trajectory: list[TrajectoryPoint],
    real_executions: int,
    gp_log: list[dict[str, Any]],
    predicted_value: float | None = None,
    confirmed_value: float | None = None,
    notes: Sequence[str] = (),
) -> TuningReport:
    guard = not _beats(best_value, default_value, task.direction)
    if guard:
        best_config, best_value = default_config, default_value
        speedup = 1.0
    else:
        speedup = (
            default_value / best_value
            if task.direction == "min"
            else best_value / default_value
        )
    return TuningReport(
        algorithm=algorithm,
        metric=task.metric,
        direction=task.direction,
        seed=task.seed,
        best_config=best_config,
        best_value=best_value,
        default_config=default_config,
        default_value=default_value,
        speedup=float(speedup),
        trajectory=tuple(trajectory),
        real_executions=real_executions,
        default_runs=1,
        total_executions=real_executions + 1,
        gp_log=tuple(gp_log),
        predicted_value=predicted_value,
        confirmed_value=confirmed_value,
        used_default_guard=guard,
        notes=tuple(notes),
    )


class _Trajectory:
    def __init__(self, direction: str):
        self.direction = direction
        self.points: list[TrajectoryPoint] = []
        self._incumbent: float | None = None

    def add(self, phase: str, value_raw: float, measured: bool = True, ok: bool = True) -> None:
        if self._incumbent is None or _beats(value_raw, self._incumbent, self.direction):
            self._incumbent = value_raw
        self.points.append(
            TrajectoryPoint(
                iteration=len(self.points) + 1,
                phase=phase,
                value=float(value_raw),
                incumbent=float(self._incumbent),
                measured=measured,
                ok=ok,
            )
        )


def _evaluate_design(
    runner: _Runner, task: TuneTask, X: np.ndarray, traj: _Trajectory, phase: str
) -> list[float]:
    """Measure a whole design; failures get the penalty value afterwards."""
    outcomes: list[float | None] = []
    for x in X:
        value, _ = runner.measure(task.space.decode(x))
        outcomes.append(value)
    if all(v is None for v in outcomes):
        raise RuntimeError(f"all {len(outcomes)} initial trials failed")
    pen = runner.penalty()
    values = [pen if v is None else v for v in outcomes]
    for v, orig in zip(values, outcomes):
        traj.add(phase, _raw(v, task.direction), ok=orig is not None)
    return values


# --- Bayesian optimization ------------------------------------------------------


def _bo_core(
    task: TuneTask,
    algorithm: str,
    warm_X: np.ndarray | None = None,
    warm_y: np.ndarray | None = None,
) -> TuningReport:
    next_seed = _seed_stream(task.seed, algorithm)
    default_config, default_value = _measure_default(task, next_seed)
    runner = _Runner(task, next_seed)
    traj = _Trajectory(task.direction)
    d = task.space.dimension

    if warm_X is None:
        X = sobol(task.init_size, d)
        y_int = _evaluate_design(runner, task, X, traj, "init")
        X_rows = [np.asarray(x, dtype=float) for x in X]
    else:
        X_rows = [np.asarray(x, dtype=float) for x in warm_X]
        y_int = [_signed(float(v), task.direction) for v in warm_y]
        best = int(np.argmin(y_int))
        traj.add("warm", _raw(y_int[best], task.direction), measured=False)

    gp_log: list[dict[str, Any]] = []
    for t in range(1, task.budget + 1):
        gp = gp_fit(
            np.vstack(X_rows), np.asarray(y_int), kernel=task.kernel,
            restarts=task.gp_restarts, seed=next_seed(),
        )
        gp_log.append({"iteration": t, **gp.hyperparameters})
        acq = Acquisition(best_observed=float(np.min(y_int)), xi=task.xi)
        x_next = maximize_acquisition(
            gp, acq, direction="min", seed=next_seed(),
            n_candidates=task.acq_candidates,
        )
        value, _ = runner.measure(task.space.decode(x_next))
        ok = value is not None
        if not ok:
            value = runner.penalty()
        X_rows.append(x_next)
        y_int.append(value)
        traj.add("search", _raw(value, task.direction), ok=ok)

    best_idx = int(np.argmin(y_int))
    best_config = task.space.decode(X_rows[best_idx])
    best_value = _raw(y_int[best_idx], task.direction)
    return _finish(
        task, algorithm, best_config, best_value, default_config, default_value,
        traj.points, runner.real_executions, gp_log,
    )


def tune_bo(task: TuneTask) -> TuningReport:
    """Bayesian optimization from a Sobol initial design of real executions."""
    return _bo_core(task, "bo")


def tune_bo_warm(
    task: TuneTask, dataset_X: np.ndarray, dataset_y: np.ndarray
) -> TuningReport:
    """Bayesian optimization warm-started from an existing labeled dataset.

    ``dataset_X`` are encoded points of the task's space, ``dataset_y`` their
    measured metric values.  No real executions are spent on an initial
    design: the GP's first incumbent is the dataset's best point.
    """
    X = np.atleast_2d(np.asarray(dataset_X, dtype=float))
    y = np.asarray(dataset_y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} values")
    if X.shape[0] < 2:
        raise ValueError("warm-start dataset needs at least 2 points")
    if X.shape[1] != task.space.dimension:
        raise ValueError(
            f"dataset dimension {X.shape[1]} != space dimension {task.space.dimension}"
        )
    return _bo_core(task, "bo-warm", warm_X=X, warm_y=y)


# --- regression-model-guided tuning ---------------------------------------------


def tune_rbo(
    task: TuneTask,
    model: LinearModel,
    full_space: FlagSpace | None = None,
    confirm_runs: int = 1,
) -> TuningReport:
    """Search against a regression model, then confirm the winner for real.

    The model predicts over the full characterized space; points of the
    tuned subspace are completed with the full space's default encodings.
    The GP/EI loop runs entirely on model predictions, so real executions
    are spent only on ``confirm_runs`` measurements of the predicted best
    (plus the default baseline).
    """
    if confirm_runs < 1:
        raise ValueError("confirm_runs must be >= 1")
    fs = full_space if full_space is not None else task.space
    if model.n_inputs != fs.dimension:
        raise ValueError(
            f"model expects {model.n_inputs} inputs, space has {fs.dimension}"
        )
    full_names = [f.name for f in fs.active_flags]
    try:
        cols = [full_names.index(f.name) for f in task.space.active_flags]
    except ValueError as exc:
        raise ValueError(f"subspace flag missing from full space: {exc}") from None

    base = fs.encode(fs.default_configuration())

    def predict(X_sub: np.ndarray) -> np.ndarray:
        X_sub = np.atleast_2d(X_sub)
        V = np.tile(base, (X_sub.shape[0], 1))
        V[:, cols] = X_sub
        return np.atleast_1d(model.predict(V))

    next_seed = _seed_stream(task.seed, "rbo")
    default_config, default_value = _measure_default(task, next_seed)
    runner = _Runner(task, next_seed)
    traj = _Trajectory(task.direction)
    d = task.space.dimension

    X_rows = [np.asarray(x, dtype=float) for x in sobol(task.init_size, d)]
    y_int = [_signed(float(v), task.direction) for v in predict(np.vstack(X_rows))]
    for v in y_int:
        traj.add("model", _raw(v, task.direction), measured=False)

    gp_log: list[dict[str, Any]] = []
    for t in range(1, task.budget + 1):
        gp = gp_fit(
            np.vstack(X_rows), np.asarray(y_int), kernel=task.kernel,
            restarts=task.gp_restarts, seed=next_seed(),
        )
        gp_log.append({"iteration": t, **gp.hyperparameters})
        acq = Acquisition(best_observed=float(np.min(y_int)), xi=task.xi)
        x_next = maximize_acquisition(
            gp, acq, direction="min", seed=next_seed(),
            n_candidates=task.acq_candidates,
        )
        v = _signed(float(predict(x_next[None, :])[0]), task.direction)
        X_rows.append(np.asarray(x_next, dtype=float))
        y_int.append(v)
        traj.add("model", _raw(v, task.direction), measured=False)

    best_idx = int(np.argmin(y_int))
    x_star = X_rows[best_idx]
    predicted_value = _raw(y_int[best_idx], task.direction)
    best_config = task.space.decode(x_star)

    notes: list[str] = []
    confirmed: list[float] = []
    for _ in range(confirm_runs):
        value, record = runner.measure(best_config)
        if value is None:
            notes.append(f"confirmation run failed: {record.note or record.status}")
        else:
            confirmed.append(_raw(value, task.direction))
            traj.add("confirm", _raw(value, task.direction))
    confirmed_value = float(np.mean(confirmed)) if confirmed else None
    best_value = confirmed_value if confirmed_value is not None else predicted_value
    if confirmed_value is None:
        notes.append("using predicted value: no confirmation run succeeded")

    return _finish(
        task, "rbo", best_config, best_value, default_config, default_value,
        traj.points, runner.real_executions, gp_log,
        predicted_value=predicted_value, confirmed_value=confirmed_value,
        notes=notes,
    )


# --- simulated annealing ----------------------------------------------------------


def sa_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule: non-worsening moves always accepted."""
    if delta <= 0:
        return True
    return float(rng.uniform()) < math.exp(-delta / max(temperature, 1e-300))


def tune_sa(
    task: TuneTask,
    n_init: int = 8,
    t0: float | None = None,
    cooling: float = 0.95,
    step_sd: float = 0.1,
) -> TuningReport:
    """Simulated annealing over the encoded subspace.

    Starts from the best of a Latin-hypercube design; each step perturbs one
    coordinate with Gaussian noise (clipped to [0, 1]), accepts by the
    Metropolis rule, and cools geometrically.  The initial temperature
    defaults to the sample standard deviation of the design's values.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if not (0 < cooling < 1):
        raise ValueError("cooling must be in (0, 1)")
    if step_sd <= 0:
        raise ValueError("step_sd must be positive")
    next_seed = _seed_stream(task.seed, "sa")
    default_config, default_value = _measure_default(task, next_seed)
    runner = _Runner(task, next_seed)
    traj = _Trajectory(task.direction)
    d = task.space.dimension

    X0 = lhs(n_init, d, seed=next_seed())
    y_int = _evaluate_design(runner, task, X0, traj, "init")

    # temperature from the observed spread of the initial design
    if t0 is None:
        t0 = float(np.std(y_int, ddof=1)) if len(y_int) > 1 else 0.0
    temperature = max(float(t0), 1e-12)

    X_all = [np.asarray(x, dtype=float) for x in X0]
    cur_idx = int(np.argmin(y_int))
    cur_x, cur_v = X_all[cur_idx], y_int[cur_idx]

    rng = np.random.default_rng(next_seed())
    for _ in range(task.budget):
        j = int(rng.integers(d))
        prop = cur_x.copy()
        prop[j] = float(np.clip(prop[j] + rng.normal(0.0, step_sd), 0.0, 1.0))
        value, _ = runner.measure(task.space.decode(prop))
        ok = value is not None
        if not ok:
            value = runner.penalty()
        X_all.append(prop)
        y_int.append(value)
        traj.add("search", _raw(value, task.direction), ok=ok)
        if sa_accept(value - cur_v, temperature, rng):
            cur_x, cur_v = prop, value
        temperature *= cooling

    best_idx = int(np.argmin(y_int))
    best_config = task.space.decode(X_all[best_idx])
    best_value = _raw(y_int[best_idx], task.direction)
    return _finish(
        task, "sa", best_config, best_value, default_config, default_value,
        traj.points, runner.real_executions, [],
    )
