"""Gaussian-process surrogate, expected improvement, and space samplers.

The surrogate is a zero-mean GP over standardized targets with an isotropic
Matern-5/2 (default) or squared-exponential kernel.  Hyperparameters
(length scale, signal variance, noise variance) are fit by maximizing the
log marginal likelihood with multi-start bounded L-BFGS-B using analytic
gradients.  Posterior predictions are de-standardized back to target units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.spatial.distance import cdist
from scipy.stats import norm, qmc

MATERN52 = "matern52"
SQEXP = "sqexp"
KERNELS = (MATERN52, SQEXP)

_SOBOL_MAX_DIM = 21201

# Bounds for (log length_scale, log signal_var, log noise_var).
_DEFAULT_LOG_BOUNDS = (
    (np.log(1e-2), np.log(10.0)),
    (np.log(1e-3), np.log(1e3)),
    (np.log(1e-8), np.log(1.0)),
)
_JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class GpFitError(RuntimeError):
    """Kernel matrix stayed non-positive-definite after jitter escalation."""


# --- samplers -----------------------------------------------------------------


def sobol(n: int, dim: int, skip_zero: bool = True) -> np.ndarray:
    """First ``n`` points of the Sobol sequence in [0, 1)^dim.

    ``skip_zero`` drops the all-zeros first element (the sequence then starts
    at the midpoint ``(0.5, .., 0.5)``), which avoids evaluating the corner
    of the space as a design point.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (1 <= dim <= _SOBOL_MAX_DIM):
        raise ValueError(f"dim must be in [1, {_SOBOL_MAX_DIM}]")
    engine = qmc.Sobol(d=dim, scramble=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        pts = engine.random(n + 1 if skip_zero else n)
    return pts[1:] if skip_zero else pts


def scrambled_sobol(n: int, dim: int, seed: int) -> np.ndarray:
    """Owen-scrambled Sobol points (seeded, deterministic)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (1 <= dim <= _SOBOL_MAX_DIM):
        raise ValueError(f"dim must be in [1, {_SOBOL_MAX_DIM}]")
    engine = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(n)


def lhs(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """Latin hypercube sample: one point per axis stratum per dimension."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(size=(n, dim))
    out = np.empty((n, dim))
    for j in range(dim):
        out[:, j] = (rng.permutation(n) + jitter[:, j]) / n
    return out


# --- kernels ------------------------------------------------------------------


def _kernel(kind: str, A: np.ndarray, B: np.ndarray, ls: float, sf2: float) -> np.ndarray:
    r = cdist(A, B)
    if kind == MATERN52:
        a = np.sqrt(5.0) * r / ls
        return sf2 * (1.0 + a + a * a / 3.0) * np.exp(-a)
    if kind == SQEXP:
        return sf2 * np.exp(-(r * r) / (2.0 * ls * ls))
    raise ValueError(f"unknown kernel {kind!r}")


def _kernel_and_grads(
    kind: str, X: np.ndarray, ls: float, sf2: float
) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free train kernel and its derivative w.r.t. log length scale."""
    r = cdist(X, X)
    if kind == MATERN52:
        a = np.sqrt(5.0) * r / ls
        e = np.exp(-a)
        K = sf2 * (1.0 + a + a * a / 3.0) * e
        # d/d(log ls) of matern52: sf2 * e^(-a) * a^2 (1 + a) / 3
        dK_dlogls = sf2 * e * (a * a) * (1.0 + a) / 3.0
    elif kind == SQEXP:
        q = (r * r) / (ls * ls)
        K = sf2 * np.exp(-q / 2.0)
        dK_dlogls = K * q
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    return K, dK_dlogls


def _chol_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    for jit in _JITTERS:
        try:
            L = cholesky(K + jit * np.eye(K.shape[0]), lower=True)
            return L, jit
        except np.linalg.LinAlgError:
            continue
    raise GpFitError("kernel matrix not positive definite after jitter escalation")


# --- surrogate ----------------------------------------------------------------


@dataclass
class GpSurrogate:
    """A fitted GP: training set, kernel hyperparameters, cached factorization."""

    X: np.ndarray
    z: np.ndarray  # standardized targets
    kernel: str
    length_scale: float
    signal_var: float
    noise_var: float
    y_mean: float
    y_sd: float
    L: np.ndarray
    alpha: np.ndarray
    jitter: float
    log_likelihood: float

    @property
    def n_train(self) -> int:
        return self.X.shape[0]

    @property
    def hyperparameters(self) -> dict[str, float]:
        return {
            "kernel": self.kernel,
            "length_scale": self.length_scale,
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "log_likelihood": self.log_likelihood,
        }

    def posterior(self, x: np.ndarray) -> tuple[float, float]:
        """Posterior mean and standard deviation at one point (target units)."""
        mu, sd = self.posterior_batch(np.atleast_2d(np.asarray(x, dtype=float)))
        return float(mu[0]), float(sd[0])

    def posterior_batch(self, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if Xq.shape[1] != self.X.shape[1]:
            raise ValueError(
                f"expected {self.X.shape[1]}-dim query, got {Xq.shape[1]}"
            )
        ks = _kernel(self.kernel, self.X, Xq, self.length_scale, self.signal_var)
        mu_std = ks.T @ self.alpha
        v = cho_solve((self.L, True), ks)
        var = self.signal_var - np.einsum("ij,ij->j", ks, v)
        sd_std = np.sqrt(np.maximum(var, 0.0))
        return self.y_mean + self.y_sd * mu_std, self.y_sd * sd_std


def _nll_and_grad(
    theta: np.ndarray, X: np.ndarray, z: np.ndarray, kind: str
) -> tuple[float, np.ndarray]:
    ls, sf2, sn2 = np.exp(theta)
    n = X.shape[0]
    Kf, dK_dlogls = _kernel_and_grads(kind, X, ls, sf2)
    K = Kf + sn2 * np.eye(n)
    try:
        L, _ = _chol_with_jitter(K)
    except GpFitError:
        return 1e25, np.zeros(3)
    alpha = cho_solve((L, True), z)
    nll = (
        0.5 * float(z @ alpha)
        + float(np.sum(np.log(np.diag(L))))
        + 0.5 * n * np.log(2.0 * np.pi)
    )
    Kinv = cho_solve((L, True), np.eye(n))
    # dNLL/dtheta_j = 0.5 * tr((Kinv - alpha alpha^T) dK/dtheta_j)
    A = Kinv - np.outer(alpha, alpha)
    grad = np.array(
        [
            0.5 * np.sum(A * dK_dlogls),
            0.5 * np.sum(A * Kf),  # dK/dlog sf2 = Kf
            0.5 * np.trace(A) * sn2,  # dK/dlog sn2 = sn2 I
        ]
    )
    return nll, grad


def gp_fit(
    X: np.ndarray,
    y: np.ndarray,
    kernel: str = MATERN52,
    restarts: int = 5,
    seed: int = 0,
    bounds: tuple[tuple[float, float], ...] = _DEFAULT_LOG_BOUNDS,
) -> GpSurrogate:
    """Fit GP hyperparameters by multi-start bounded likelihood maximization.

    Duplicate training rows (closer than 1e-12) keep the first occurrence.
    Targets are standardized internally.  The first start is a fixed default
    guess; the remaining ``restarts - 1`` are seeded uniform draws within the
    bounds, so refitting the same data with the same seed is deterministic.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} targets")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite training data")

    keep = _dedupe_rows(X)
    X, y = X[keep], y[keep]
    if X.shape[0] < 2:
        raise ValueError("need at least 2 distinct training points")

    y_mean = float(np.mean(y))
    y_sd = float(np.std(y))
    if y_sd == 0.0:
        y_sd = 1.0
    z = (y - y_mean) / y_sd

    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [np.array([np.log(0.5), np.log(1.0), np.log(1e-4)])]
    rng = np.random.default_rng(seed)
    for _ in range(restarts - 1):
        starts.append(rng.uniform(lo, hi))

    best_theta, best_nll = None, np.inf
    for theta0 in starts:
        res = optimize.minimize(
            _nll_and_grad,
            np.clip(theta0, lo, hi),
            args=(X, z, kernel),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
        )
        if res.fun < best_nll:
            best_nll, best_theta = float(res.fun), res.x
    if best_theta is None or not np.isfinite(best_nll):
        raise GpFitError("likelihood optimization failed for every start")

    ls, sf2, sn2 = np.exp(best_theta)
    Kf, _ = _kernel_and_grads(kernel, X, ls, sf2)
    L, jit = _chol_with_jitter(Kf + sn2 * np.eye(X.shape[0]))
    alpha = cho_solve((L, True), z)
    return GpSurrogate(
        X=X, z=z, kernel=kernel,
        length_scale=float(ls), signal_var=float(sf2), noise_var=float(sn2),
        y_mean=y_mean, y_sd=y_sd, L=L, alpha=alpha, jitter=jit,
        log_likelihood=-best_nll,
    )


def _dedupe_rows(X: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Indices of rows to keep, dropping later near-duplicates."""
    n = X.shape[0]
    keep: list[int] = []
    for i in range(n):
        dup = any(np.max(np.abs(X[i] - X[j])) < tol for j in keep)
        if not dup:
            keep.append(i)
    return np.array(keep, dtype=int)


# --- acquisition ----------------------------------------------------------------


@dataclass(frozen=True)
class Acquisition:
    """Expected improvement over the incumbent with exploration weight xi."""

    best_observed: float
    xi: float = 0.01


def expected_improvement(
    mu: np.ndarray | float,
    sigma: np.ndarray | float,
    f_best: float,
    xi: float = 0.01,
    direction: str = "max",
) -> np.ndarray | float:
    """EI of a Gaussian prediction against the incumbent ``f_best``.

    For maximization the improvement margin is ``mu - f_best - xi``; for
    minimization ``f_best - mu - xi``.  With ``sigma == 0`` EI degenerates to
    ``max(0, margin)``.  Always non-negative.
    """
    if direction not in ("min", "max"):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    scalar = np.ndim(mu) == 0 and np.ndim(sigma) == 0
    mu_arr, sd_arr = np.broadcast_arrays(
        np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
    )
    if np.any(sd_arr < 0):
        raise ValueError("sigma must be >= 0")
    margin = (mu_arr - f_best - xi) if direction == "max" else (f_best - mu_arr - xi)
    pos = sd_arr > 0
    safe_sd = np.where(pos, sd_arr, 1.0)
    zz = margin / safe_sd
    smooth = margin * norm.cdf(zz) + sd_arr * norm.pdf(zz)
    out = np.maximum(np.where(pos, smooth, np.maximum(margin, 0.0)), 0.0)
    return float(out) if scalar else out


_GOLDEN_ITERS = 20
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def maximize_acquisition(
    gp: GpSurrogate,
    acq: Acquisition,
    direction: str,
    seed: int,
    n_candidates: int = 1024,
    n_refine: int = 10,
    passes: int = 2,
) -> np.ndarray:
    """Propose the next point: screen Sobol candidates, refine the best few.

    A fresh scrambled Sobol set of ``n_candidates`` points is scored by EI;
    the ``n_refine`` best are polished by coordinate-wise golden-section
    line searches (``passes`` sweeps over the coordinates).  Returns the
    point with the highest refined EI.  Deterministic given the seed.
    """
    dim = gp.X.shape[1]

    def score(P: np.ndarray) -> np.ndarray:
        mu, sd = gp.posterior_batch(P)
        return np.asarray(
            expected_improvement(mu, sd, acq.best_observed, acq.xi, direction)
        )

    cands = scrambled_sobol(n_candidates, dim, seed)
    ei = score(cands)
    top = np.argsort(-ei, kind="stable")[: min(n_refine, n_candidates)]
    pts = cands[top].copy()

    for _ in range(passes):
        for j in range(dim):
            pts[:, j] = _golden_max_coord(score, pts, j)

    best_pool = np.vstack([pts, cands[top]])
    best_scores = score(best_pool)
    return best_pool[int(np.argmax(best_scores))].copy()


def _golden_max_coord(
    score: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, j: int
) -> np.ndarray:
    """Golden-section maximization of coordinate j for all points at once."""
    m = pts.shape[0]
    a = np.zeros(m)
    b = np.ones(m)
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = _coord_scores(score, pts, j, x1)
    f2 = _coord_scores(score, pts, j, x2)
    for _ in range(_GOLDEN_ITERS):
        left = f1 >= f2  # keep [a, x2] where the left probe wins
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x1 = b - _INVPHI * (b - a)
        x2 = a + _INVPHI * (b - a)
        # both probes rescored per iteration: one batched posterior each
        f1 = _coord_scores(score, pts, j, x1)
        f2 = _coord_scores(score, pts, j, x2)
    mid = (a + b) / 2.0
    f_mid = _coord_scores(score, pts, j, mid)
    f_orig = score(pts)
    return np.where(f_mid > f_orig, mid, pts[:, j])


def _coord_scores(
    score: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, j: int, vals: np.ndarray
) -> np.ndarray:
    probe = pts.copy()
    probe[:, j] = vals
    return score(probe)
