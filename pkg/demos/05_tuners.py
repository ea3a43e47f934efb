"""All four tuning strategies on one target, with their execution bills.

The point of the comparison: once characterization has produced a labeled
dataset and a regression model, the warm-started and model-guided tuners
reuse that sunk cost and spend far fewer *new* executions than a cold
Bayesian-optimization run — and every strategy falls back to the stock
default if it can't beat it.
"""

import numpy as np

from flagtuner.active_learning import AlBudget, run_al_loop
from flagtuner.executor import VirtualExecutor, VirtualTarget
from flagtuner.flagspace import unit_space
from flagtuner.linreg import SgdHyper
from flagtuner.tuners import TuneTask, tune_bo, tune_bo_warm, tune_rbo, tune_sa

target = VirtualTarget(
    dim=4, relevant_dims=(0, 1, 2, 3), centers=(0.25, 0.6, 0.45, 0.7),
    weights=(2.0, 1.5, 1.2, 0.8), noise_sd=0.01, base=1.0,
)
space = unit_space(4)
executor = VirtualExecutor(target)

# Characterize once; the warm start reuses the labels, the model-guided
# tuner reuses the fitted regression.
al = run_al_loop(
    space, executor,
    budget=AlBudget(batch_fraction=0.1, max_rounds=4, rel_rmse_eps=0.0,
                    ensemble_size=2),
    seed=9, n_candidates=300, seed_fraction=0.1, test_fraction=0.1,
    sgd=SgdHyper(learning_rate=0.1, epochs=12000, batch_size=1024),
)
print(f"characterization: {al.report.executed_trials} executions,"
      f" model test rmse {al.report.rmse_history[-1]:.4f}")

task = TuneTask(space=space, executor=executor, metric="value",
                direction="min", budget=12, init_size=6, seed=4,
                gp_restarts=3, acq_candidates=256)

reports = {
    "bo": tune_bo(task),
    "bo-warm": tune_bo_warm(task, al.train_X, al.train_y),
    "rbo": tune_rbo(task, al.model, confirm_runs=2),
    "sa": tune_sa(task, n_init=6),
}

print(f"\n{'algorithm':<9} {'new executions':>14} {'best value':>11}"
      f" {'speedup':>8}  best point")
for name, rep in reports.items():
    point = {k: round(v, 3) for k, v in rep.best_config.items()}
    print(f"{name:<9} {rep.real_executions:>14} {rep.best_value:>11.4f}"
          f" {rep.speedup:>8.3f}  {point}")

rbo = reports["rbo"]
print(f"\nrbo searched entirely on the regression model: predicted"
      f" {rbo.predicted_value:.4f}, confirmed {rbo.confirmed_value:.4f}"
      f" with {rbo.real_executions} real run(s)")
print(f"true optimum of the target: {target.minimum_value:.4f}"
      f" at {np.round(target.minimizer(), 3).tolist()}")
