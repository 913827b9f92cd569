"""Adaptive selection of the source-critic penalty weight.

The penalized objective is L(z; a) = -f(z) + (a/(1-a)) * (ref - c(z)) for a
surrogate f, critic c, and reference expectation ref. The adaptive routine
picks a on a discrete grid by maximizing the dual value at Monte Carlo
stationarity candidates, discarding grid points whose best combined gradient
norm exceeds a threshold.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from gambo.nets import Mlp, mlp_batched_forward_and_input_grads, mlp_forward, mlp_input_grad

THRESHOLD_MODES = ("relative", "absolute", "disabled")


@dataclasses.dataclass
class AscrConfig:
    """Grid resolution, Monte Carlo budget, and norm-threshold policy.

    In "relative" mode the threshold is ``threshold`` times the batch-mean
    surrogate gradient norm; in "absolute" mode it is used verbatim;
    "disabled" never discards a grid point.
    """

    alpha_steps: int = 200
    budget: int = 512
    threshold_mode: str = "relative"
    threshold: float = 1.0

    def __post_init__(self) -> None:
        if self.alpha_steps < 2:
            raise ValueError("alpha_steps must be at least 2")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.threshold_mode != "disabled" and self.threshold <= 0:
            raise ValueError("threshold must be positive when enabled")


@dataclasses.dataclass
class AscrState:
    """Mutable per-run state: current weight, last valid weight, history.

    History entries are (iteration, alpha, fallback) where fallback marks
    calls on which every grid point was discarded and the last valid weight
    was reused.
    """

    current_alpha: float = 0.0
    last_valid_alpha: float = 0.0
    history: list[tuple[int, float, bool]] = dataclasses.field(default_factory=list)


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def lagrangian(z: np.ndarray, alpha: float, surrogate: Mlp, critic: Mlp, ref_exp: float) -> float:
    """Penalized objective -f(z) + (alpha/(1-alpha))*(ref_exp - c(z)).

    Optimizers maximize the negative of this value.
    """
    _check_alpha(alpha)
    lam = alpha / (1.0 - alpha)
    return -mlp_forward(surrogate, z) + lam * (ref_exp - mlp_forward(critic, z))


def lagrangian_grad(z: np.ndarray, alpha: float, surrogate: Mlp, critic: Mlp) -> np.ndarray:
    """Gradient of the penalized objective: -grad f(z) - lambda * grad c(z)."""
    _check_alpha(alpha)
    lam = alpha / (1.0 - alpha)
    return -mlp_input_grad(surrogate, z) - lam * mlp_input_grad(critic, z)


def alpha_grid(alpha_steps: int) -> np.ndarray:
    """The search grid {0, 1/steps, ..., (steps-1)/steps}; excludes 1."""
    return np.arange(alpha_steps, dtype=np.float64) / alpha_steps


def adaptive_scr(
    surrogate: Mlp,
    critic: Mlp,
    ref_exp: float,
    cfg: AscrConfig,
    state: AscrState,
    rng: np.random.Generator,
    iteration: int = 0,
    condition: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Pick the penalty weight alpha by dual-value maximization on the grid.

    Draws ``cfg.budget`` standard-normal candidates (a single
    ``rng.standard_normal((budget, d))`` call, so tests can replay the draw),
    computes surrogate and critic input gradients once, and for each grid
    alpha selects the candidate minimizing ||(1-a)*grad_f + a*grad_c||. Grid
    points whose winning norm exceeds the threshold are discarded. Among
    survivors, returns the alpha maximizing
    ``-(1-a) f(z*) + a (ref_exp - c(z*))``, ties broken toward smaller alpha.
    If every alpha is discarded, the last valid alpha is reused and the call
    is flagged as a fallback in ``state.history``.

    ``condition``, when given, is a (mask, values) pair of fixed coordinates:
    sampled candidates have those coordinates overwritten and gradient norms
    are taken over the free coordinates only.
    """
    d = surrogate.input_dim
    if critic.input_dim != d:
        raise ValueError("surrogate and critic must share an input dimension")
    Z = rng.standard_normal((cfg.budget, d))
    free = slice(None)
    if condition is not None:
        mask, values = condition
        Z[:, mask] = values[mask]
        free = ~mask
    f_vals, f_grads = mlp_batched_forward_and_input_grads(surrogate, Z)
    c_vals, c_grads = mlp_batched_forward_and_input_grads(critic, Z)
    gf = f_grads[:, free]
    gc = c_grads[:, free]

    if cfg.threshold_mode == "relative":
        thresh = cfg.threshold * float(np.linalg.norm(gf, axis=1).mean())
    elif cfg.threshold_mode == "absolute":
        thresh = cfg.threshold
    else:
        thresh = np.inf

    best_alpha: float | None = None
    best_g = -np.inf
    for a in alpha_grid(cfg.alpha_steps):
        combined = (1.0 - a) * gf + a * gc
        norms = np.linalg.norm(combined, axis=1)
        i = int(np.argmin(norms))
        if norms[i] > thresh:
            continue
        g = -(1.0 - a) * f_vals[i] + a * (ref_exp - c_vals[i])
        if g > best_g:
            best_g = g
            best_alpha = float(a)

    fallback = best_alpha is None
    alpha = state.last_valid_alpha if fallback else best_alpha
    if not fallback:
        state.last_valid_alpha = alpha
    state.current_alpha = alpha
    state.history.append((iteration, alpha, fallback))
    return alpha
