"""Narrowing a wide flag space down to the flags that matter.

Most flags in a big space have no measurable effect on the metric.  Tuning
all of them wastes the search budget, so the selection stage fits an
L1-penalized linear model on characterization data and keeps only the flags
with non-zero weight.  The penalty strength is picked by cross-validation.
"""

import numpy as np

from flagtuner.featsel import (
    fit_lasso,
    grid_search_lambda,
    lambda_max,
    select_flags,
)
from flagtuner.flagspace import unit_space

rng = np.random.default_rng(3)

# Pretend characterization labeled 150 configurations of a 12-flag space.
# Only x2, x5 and x9 actually move the metric.
space = unit_space(12)
X = rng.uniform(size=(150, 12))
y = 1.0 + 2.0 * X[:, 2] - 1.4 * X[:, 5] + 0.8 * X[:, 9] \
    + 0.03 * rng.standard_normal(150)

# The whole regularization path lives below lambda_max (the all-zero point).
lam_hi = lambda_max(X, y)
grid = [lam_hi * f for f in (0.5, 0.2, 0.1, 0.05, 0.02, 0.01)]
best_lam, cv_mse = grid_search_lambda(X, y, grid, folds=5, seed=0)

print(f"lambda_max = {lam_hi:.4f}; picked lambda = {best_lam:.4f}")
print("cross-validated MSE per lambda:")
for lam in sorted(cv_mse):
    marker = "  <- chosen" if lam == best_lam else ""
    print(f"  {lam:>8.4f}  {cv_mse[lam]:.5f}{marker}")

fit = fit_lasso(X, y, best_lam)
print(f"\nconverged={fit.converged} after {fit.n_iter} sweeps,"
      f" {fit.support.size} of 12 weights non-zero")

subset = select_flags(fit, space)
print("\nper-flag weights (standardized-metric units):")
for flag, w in zip(space.active_flags, fit.weights):
    picked = "kept" if flag.name in subset.names else "  - "
    print(f"  {flag.name:<4} {w:>8.4f}   {picked}")

tuning_space = space.subset(subset.names)
print(f"\ntuning will search {tuning_space.dimension} dimensions"
      f" instead of {space.dimension}: {list(subset.names)}")

# With an absurdly large penalty nothing survives; selection then falls back
# to the largest-magnitude weights instead of handing tuning an empty space.
overcooked = select_flags(fit_lasso(X, y, lam_hi * 1.5), space)
print(f"\nat lambda {lam_hi * 1.5:.3f} everything shrinks to zero ->"
      f" fallback picks {list(overcooked.names)} (fallback={overcooked.fallback})")
