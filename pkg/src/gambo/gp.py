"""Gaussian process regression with Sobol initialization and MC batch EI.

A Matern-5/2 GP with a single shared lengthscale, fit by multi-start bounded
ascent of the log marginal likelihood. Batch acquisition uses greedy
"believer" selection over a Sobol candidate pool: each pick is scored by
Monte Carlo expected improvement, then fantasized at its posterior mean so
that the collapsed variance pushes later picks elsewhere.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import qmc

# Box bounds for hyperparameter ascent (natural scale): lengthscale,
# outputscale (variance), and noise variance, all in standardized-y units
# over the standardized input box.
LENGTHSCALE_BOUNDS = (0.02, 50.0)
OUTPUTSCALE_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-6, 2.0)

# First restart is the fixed default point, so the fitted marginal
# likelihood can never fall below the default's.
DEFAULT_HYPERS = (1.0, 1.0, 1e-2)
RESTART_POINTS = (
    DEFAULT_HYPERS,
    (0.1, 1.0, 1e-4),
    (0.3, 1.0, 1e-2),
    (0.5, 0.5, 1e-1),
    (2.0, 1.0, 1e-2),
    (5.0, 2.0, 1e-3),
    (10.0, 1.0, 1e-1),
    (0.05, 0.2, 1e-4),
)

# Hyperparameters are estimated on a deterministic evenly-strided subsample
# once the training set outgrows this cap; the posterior always conditions
# on the full data.
MLL_SUBSAMPLE_CAP = 192

SQRT5 = np.sqrt(5.0)


@dataclasses.dataclass
class AcquireConfig:
    """Batch size, Sobol pool size, and MC sample count for acquisition."""

    batch: int = 64
    candidate_pool: int = 4096
    mc_samples: int = 128

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.candidate_pool < self.batch:
            raise ValueError("candidate_pool must be at least batch")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")


@dataclasses.dataclass
class Gp:
    """Fitted posterior state; immutable after construction."""

    X: np.ndarray
    y: np.ndarray
    y_mean: float
    y_std: float
    ys: np.ndarray
    lengthscale: float
    outputscale: float
    noise: float
    L: np.ndarray
    alpha_vec: np.ndarray


def sobol_sample(n: int, d: int, seed: int | None = None) -> np.ndarray:
    """First n points of a Sobol sequence in [0, 1)^d.

    Convention: index 0 is included, so the first unscrambled point is the
    origin. Passing a seed applies deterministic scrambling.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if d < 1 or d > 21201:
        raise ValueError(f"unsupported dimension {d}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        engine = qmc.Sobol(d=d, scramble=seed is not None, seed=seed)
        return engine.random(n)


def matern52(X1: np.ndarray, X2: np.ndarray, lengthscale: float, outputscale: float) -> np.ndarray:
    """Matern-5/2 kernel matrix between two point sets."""
    a = SQRT5 * cdist(X1, X2) / lengthscale
    return outputscale * (1.0 + a + a * a / 3.0) * np.exp(-a)


def log_marginal_likelihood(
    X: np.ndarray, y: np.ndarray, lengthscale: float, outputscale: float, noise: float
) -> float:
    """Exact log marginal likelihood of standardized targets y under the GP."""
    n = len(y)
    K = matern52(X, X, lengthscale, outputscale) + noise * np.eye(n)
    L = np.linalg.cholesky(K)
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi))


def _neg_mll_and_grad(theta: np.ndarray, D: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative MLL and its gradient w.r.t. (log ell, log s2, log noise)."""
    ell, s2, noise = np.exp(theta)
    n = len(y)
    a = SQRT5 * D / ell
    E = np.exp(-a)
    K_no_noise = s2 * (1.0 + a + a * a / 3.0) * E
    K = K_no_noise + noise * np.eye(n)
    c, info = lapack.dpotrf(K, lower=1, overwrite_a=1)
    if info != 0:
        return 1e12, np.zeros(3)
    alpha, _ = lapack.dpotrs(c, y, lower=1)
    mll = -0.5 * y @ alpha - np.log(np.diag(c)).sum() - 0.5 * n * np.log(2 * np.pi)
    Kinv, _ = lapack.dpotri(c, lower=1)
    Kinv = Kinv + np.tril(Kinv, -1).T
    M = np.outer(alpha, alpha) - Kinv
    dK_ell = s2 * E * (a * a * (1.0 + a) / 3.0)
    g_ell = 0.5 * float(np.sum(M * dK_ell))
    g_s2 = 0.5 * float(np.sum(M * K_no_noise))
    g_noise = 0.5 * noise * float(np.trace(M))
    return -float(mll), -np.array([g_ell, g_s2, g_noise])


def _factorize(X: np.ndarray, ys: np.ndarray, ell: float, s2: float, noise: float):
    """Cholesky of K + noise*I with escalating jitter on failure."""
    n = len(ys)
    K = matern52(X, X, ell, s2) + noise * np.eye(n)
    jitter = 0.0
    for _ in range(12):
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(n))
            return L, cho_solve((L, True), ys)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-10 * s2)
    raise np.linalg.LinAlgError("covariance factorization failed at maximum jitter")


def gp_from_params(
    X: np.ndarray, y: np.ndarray, lengthscale: float, outputscale: float, noise: float
) -> Gp:
    """Construct a posterior with fixed kernel hyperparameters."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    y_mean = float(y.mean())
    y_std = max(float(y.std()), 1e-8)
    ys = (y - y_mean) / y_std
    L, alpha_vec = _factorize(X, ys, lengthscale, outputscale, noise)
    return Gp(X, y, y_mean, y_std, ys, lengthscale, outputscale, noise, L, alpha_vec)


def gp_fit(X: np.ndarray, y: np.ndarray, maxiter: int = 40) -> Gp:
    """Fit hyperparameters by multi-start bounded MLL ascent, then condition.

    Targets are standardized internally. Eight fixed restarts (the first at
    the default hyperparameters) run L-BFGS-B in log space within documented
    box bounds; the fit is deterministic for identical data. Degenerate data
    (identical rows, constant targets) fits at the noise floor.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need at least two input rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("inputs and targets must be finite")
    y_mean = float(y.mean())
    y_std = max(float(y.std()), 1e-8)
    ys = (y - y_mean) / y_std

    n = len(X)
    if n > MLL_SUBSAMPLE_CAP:
        idx = np.unique(np.linspace(0, n - 1, MLL_SUBSAMPLE_CAP).round().astype(int))
        Xf, yf = X[idx], ys[idx]
    else:
        Xf, yf = X, ys
    D = cdist(Xf, Xf)

    log_bounds = [
        tuple(np.log(LENGTHSCALE_BOUNDS)),
        tuple(np.log(OUTPUTSCALE_BOUNDS)),
        tuple(np.log(NOISE_BOUNDS)),
    ]
    best_val = np.inf
    best_theta = np.log(np.asarray(DEFAULT_HYPERS))
    for start in RESTART_POINTS:
        res = minimize(
            _neg_mll_and_grad,
            np.log(np.asarray(start)),
            args=(D, yf),
            jac=True,
            method="L-BFGS-B",
            bounds=log_bounds,
            options={"maxiter": maxiter, "ftol": 1e-8, "gtol": 1e-5},
        )
        if res.fun < best_val:
            best_val = res.fun
            best_theta = res.x
    ell, s2, noise = np.exp(best_theta)
    L, alpha_vec = _factorize(X, ys, ell, s2, noise)
    return Gp(X, y, y_mean, y_std, ys, float(ell), float(s2), float(noise), L, alpha_vec)


def gp_posterior(gp: Gp, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact posterior mean and covariance at query points, in raw y units."""
    Xs = np.asarray(Xs, dtype=np.float64)
    if Xs.ndim != 2 or Xs.shape[1] != gp.X.shape[1]:
        raise ValueError(f"query shape {Xs.shape} does not match input dim {gp.X.shape[1]}")
    Kxs = matern52(gp.X, Xs, gp.lengthscale, gp.outputscale)
    v = solve_triangular(gp.L, Kxs, lower=True)
    mean_std = Kxs.T @ gp.alpha_vec
    cov_std = matern52(Xs, Xs, gp.lengthscale, gp.outputscale) - v.T @ v
    cov_std = 0.5 * (cov_std + cov_std.T)
    diag = np.arange(len(Xs))
    cov_std[diag, diag] = np.maximum(cov_std[diag, diag], 0.0)
    mean = gp.y_mean + gp.y_std * mean_std
    return mean, gp.y_std**2 * cov_std


def _posterior_mean_var_std(gp: Gp, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardized-unit posterior mean/variance plus the whitened cross term."""
    Kxs = matern52(gp.X, Xs, gp.lengthscale, gp.outputscale)
    Q = solve_triangular(gp.L, Kxs, lower=True)  # (n, m)
    mean = Kxs.T @ gp.alpha_vec
    var = np.maximum(gp.outputscale - np.einsum("ij,ij->j", Q, Q), 0.0)
    return mean, var, Q


def mc_expected_improvement(
    mu: np.ndarray, var: np.ndarray, incumbent: float, eps: np.ndarray
) -> np.ndarray:
    """Monte Carlo EI per candidate from draws y = mu + sqrt(var)*eps."""
    draws = mu[None, :] + np.sqrt(var)[None, :] * eps
    return np.maximum(draws - incumbent, 0.0).mean(axis=0)


def qei_acquire(
    gp: Gp,
    incumbent: float,
    cfg: AcquireConfig,
    bounds: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Select a batch of points by greedy MC expected improvement.

    A scrambled Sobol pool is mapped onto ``bounds`` (a (d, 2) box). For each
    of ``cfg.batch`` picks, every pool candidate is scored by MC expected
    improvement over ``incumbent`` (raw y units) under the posterior
    conditioned on all previous picks fantasized at their posterior means;
    mean-value fantasies leave the mean unchanged and only collapse variance.
    """
    bounds = np.asarray(bounds, dtype=np.float64)
    d = gp.X.shape[1]
    if bounds.shape != (d, 2):
        raise ValueError(f"bounds must have shape ({d}, 2)")
    pool01 = sobol_sample(cfg.candidate_pool, d, seed=int(rng.integers(2**63 - 1)))
    pool = bounds[:, 0] + pool01 * (bounds[:, 1] - bounds[:, 0])

    mu, var, Q = _posterior_mean_var_std(gp, pool)
    inc = (incumbent - gp.y_mean) / gp.y_std
    # One shared draw matrix per acquisition: common random numbers across
    # greedy picks keep the EI landscape coherent while variance collapses.
    eps = rng.standard_normal((cfg.mc_samples, len(pool)))
    fantasy_cols: list[np.ndarray] = []
    picks: list[int] = []
    for _ in range(cfg.batch):
        ei = mc_expected_improvement(mu, var, inc, eps)
        i = int(np.argmax(ei))
        if ei[i] <= 1e-12:
            # EI exhausted under fantasy conditioning: fall back to the most
            # uncertain candidate instead of degenerating to index 0.
            i = int(np.argmax(var))
        picks.append(i)
        # Cross-covariance of the pool with the new fantasy point, given the
        # data and all earlier fantasies.
        c = matern52(pool, pool[i : i + 1], gp.lengthscale, gp.outputscale)[:, 0]
        c -= Q.T @ Q[:, i]
        for col in fantasy_cols:
            c -= col * col[i]
        denom = max(var[i] + gp.noise, 1e-12)
        col = c / np.sqrt(denom)
        var = np.maximum(var - col * col, 0.0)
        fantasy_cols.append(col)
    return pool[picks]
