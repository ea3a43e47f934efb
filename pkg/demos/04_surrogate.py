"""The Gaussian-process surrogate behind the Bayesian tuners.

A GP turns a handful of expensive measurements into a posterior mean and
uncertainty everywhere, and expected improvement (EI) turns that posterior
into "where should the next execution go".  This demo fits a GP to seven
points of a bumpy 1-d function and walks the acquisition machinery.
"""

import numpy as np

from flagtuner.surrogate import (
    Acquisition,
    expected_improvement,
    gp_fit,
    lhs,
    maximize_acquisition,
    sobol,
)


def f(x):
    return np.sin(3.0 * x) + 0.5 * x


train_x = np.array([[0.05], [0.2], [0.35], [0.5], [0.7], [0.85], [0.97]])
train_y = f(train_x.ravel())

gp = gp_fit(train_x, train_y, kernel="matern52", restarts=5, seed=0)
h = gp.hyperparameters
print("fitted hyperparameters:")
print(f"  length_scale={h['length_scale']:.3f} signal_var={h['signal_var']:.3f}"
      f" noise_var={h['noise_var']:.2e} (log-lik {h['log_likelihood']:.2f})")

# Posterior vs truth on a coarse grid.  sd collapses near training points.
best_seen = float(train_y.max())
grid = np.linspace(0.0, 1.0, 11)[:, None]
mu, sd = gp.posterior_batch(grid)
ei = expected_improvement(mu, sd, best_seen, xi=0.01, direction="max")
print(f"\n{'x':>5} {'truth':>8} {'mean':>8} {'sd':>8} {'EI':>9}")
for i, x in enumerate(grid.ravel()):
    print(f"{x:>5.2f} {f(x):>8.3f} {mu[i]:>8.3f} {sd[i]:>8.3f} {ei[i]:>9.5f}")

# The tuners maximize EI over scrambled-Sobol candidates plus a local polish.
acq = Acquisition(best_observed=best_seen, xi=0.01)
x_next = maximize_acquisition(gp, acq, direction="max", seed=7)
mu_n, sd_n = gp.posterior(x_next)
ei_n = expected_improvement(mu_n, sd_n, best_seen, xi=0.01, direction="max")
print(f"\nnext execution proposed at x={x_next[0]:.4f} (EI {ei_n:.5f})")

# Space-filling designs used for initial points: Sobol is deterministic and
# evenly stratified; Latin hypercube is seeded and hits every axis stratum.
print("\nfirst 8 Sobol points in 2-d:")
print(np.round(sobol(8, 2), 4))
print("8-point Latin hypercube (seed 1):")
print(np.round(lhs(8, 2, seed=1), 4))
cells = (sobol(256, 2, skip_zero=False) * 16).astype(int)
counts = np.bincount(cells[:, 0] * 16 + cells[:, 1], minlength=256)
print(f"\n256 Sobol points over a 16x16 grid: every cell holds exactly"
      f" {counts.min()}-{counts.max()} point(s)")
