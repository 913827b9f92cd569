"""Optimization loops over the penalized surrogate objective.

GABO pairs Bayesian optimization with the adaptive critic penalty; GAGA does
the same for first-order ascent. Setting the penalty weight to a constant
zero recovers the unpenalized parents (BO-qEI, gradient ascent) exactly, and
a constant weight of one gives the pure-critic limit that ignores the
surrogate. A simulated-annealing baseline on the unpenalized surrogate is
included. Runs are deterministic given (config, seed) and never touch the
oracle.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Any

import numpy as np

from gambo import rng as rngmod
from gambo.ascr import AscrConfig, AscrState, adaptive_scr
from gambo.gp import AcquireConfig, gp_fit, qei_acquire, sobol_sample
from gambo.nets import (
    Mlp,
    lipschitz_upper_bound,
    mlp_batched_forward,
    mlp_batched_forward_and_input_grads,
    mlp_init,
    scale_output,
)
from gambo.tasks import OfflineDataset
from gambo.wasserstein import CriticTrainConfig, reference_expectation, train_critic

TRAJECTORY_SCHEMA_VERSION = 1

OPTIMIZERS = ("gabo", "gaga", "bo_qei", "grad_ascent", "anneal")
ALPHA_MODES = ("adaptive", "constant", "off")

# Fallback acquisition half-width in standardized optimization space. The
# actual box is derived from the offline data (see _acquire_bounds): sampling
# far outside the data support lets both the surrogate and the critic
# extrapolate linearly, which corrupts stored scores with unbounded
# penalties or bonuses.
ACQUIRE_BOUND = 4.0

_DEFAULT_TB = {
    "gabo": (32, 64),
    "bo_qei": (32, 64),
    "anneal": (32, 64),
    "gaga": (128, 16),
    "grad_ascent": (128, 16),
}


@dataclasses.dataclass
class RunConfig:
    """Full configuration of one optimization run.

    ``n_generator`` is the number of sampling iterations between critic
    retrainings; None disables retraining (the critic is trained exactly
    once, at initialization).
    """

    optimizer: str = "gabo"
    alpha_mode: str = "adaptive"
    alpha_const: float = 0.0
    T: int | None = None
    b: int | None = None
    n_generator: int | None = 4
    eta: float = 0.05
    anneal_step: float = 0.1
    anneal_floor: float = 1e-3
    ascr: AscrConfig = dataclasses.field(default_factory=AscrConfig)
    critic: CriticTrainConfig = dataclasses.field(default_factory=CriticTrainConfig)
    acquire: AcquireConfig = dataclasses.field(default_factory=AcquireConfig)

    def __post_init__(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.optimizer in ("bo_qei", "grad_ascent", "anneal"):
            self.alpha_mode = "off"
            self.alpha_const = 0.0
        if self.alpha_mode == "constant" and not 0.0 <= self.alpha_const <= 1.0:
            raise ValueError("constant alpha must lie in [0, 1]")
        if self.n_generator is not None and self.n_generator < 1:
            raise ValueError("n_generator must be positive or None")
        default_t, default_b = _DEFAULT_TB[self.optimizer]
        if self.T is None:
            self.T = default_t
        if self.b is None:
            self.b = default_b
        if self.T < 1 or self.b < 1:
            raise ValueError("T and b must be positive")

    @property
    def total_budget(self) -> int:
        return self.T * self.b

    def to_dict(self) -> dict[str, Any]:
        return {
            "optimizer": self.optimizer,
            "alpha_mode": self.alpha_mode,
            "alpha_const": self.alpha_const,
            "T": self.T,
            "b": self.b,
            "n_generator": self.n_generator,
            "eta": self.eta,
            "anneal_step": self.anneal_step,
            "anneal_floor": self.anneal_floor,
            "ascr": dataclasses.asdict(self.ascr),
            "critic": dataclasses.asdict(self.critic),
            "acquire": dataclasses.asdict(self.acquire),
        }


@dataclasses.dataclass
class Record:
    """One penalized-objective evaluation."""

    iteration: int
    index: int
    z: np.ndarray
    y: float
    alpha: float


@dataclasses.dataclass
class Trajectory:
    """Time-ordered record of all sampled candidates and bookkeeping events."""

    records: list[Record] = dataclasses.field(default_factory=list)
    critic_events: list[tuple[int, int, float]] = dataclasses.field(default_factory=list)
    alpha_events: list[tuple[int, float, bool]] = dataclasses.field(default_factory=list)
    eval_queries: int = 0
    probe_queries: int = 0
    meta: dict[str, Any] = dataclasses.field(default_factory=dict)

    def add_batch(self, t: int, Z: np.ndarray, ys: np.ndarray, alpha: float) -> None:
        for i, (z, y) in enumerate(zip(Z, ys)):
            self.records.append(Record(t, i, np.array(z), float(y), float(alpha)))
        self.eval_queries += len(Z)

    @property
    def designs(self) -> np.ndarray:
        return np.array([r.z for r in self.records])

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    def save_jsonl(self, path) -> None:
        header = {
            "schema_version": TRAJECTORY_SCHEMA_VERSION,
            "kind": "trajectory",
            "meta": self.meta,
            "critic_events": [list(e) for e in self.critic_events],
            "alpha_events": [list(e) for e in self.alpha_events],
            "eval_queries": self.eval_queries,
            "probe_queries": self.probe_queries,
        }
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            for r in self.records:
                fh.write(
                    json.dumps(
                        {"t": r.iteration, "i": r.index, "z": r.z.tolist(), "y": r.y, "alpha": r.alpha}
                    )
                    + "\n"
                )

    @classmethod
    def load_jsonl(cls, path) -> "Trajectory":
        with open(path) as fh:
            header = json.loads(fh.readline())
            if header.get("schema_version") != TRAJECTORY_SCHEMA_VERSION:
                raise ValueError(f"unsupported trajectory schema in {path}")
            traj = cls(
                critic_events=[tuple(e) for e in header["critic_events"]],
                alpha_events=[tuple(e) for e in header["alpha_events"]],
                eval_queries=header["eval_queries"],
                probe_queries=header["probe_queries"],
                meta=header["meta"],
            )
            for line in fh:
                rec = json.loads(line)
                traj.records.append(
                    Record(rec["t"], rec["i"], np.array(rec["z"]), rec["y"], rec["alpha"])
                )
        return traj


class _PenalizedObjective:
    """Evaluates candidates under the current penalty weight.

    At alpha = 0 the value is exactly the surrogate output; at alpha = 1 it
    is the pure-critic score c(z) - ref (the surrogate is ignored); otherwise
    it is f(z) - lambda * (ref - c(z)) with lambda = alpha / (1 - alpha).
    """

    def __init__(self, surrogate: Mlp, critic: Mlp | None):
        self.surrogate = surrogate
        self.critic = critic
        self.ref_exp = math.nan

    def values(self, Z: np.ndarray, alpha: float) -> np.ndarray:
        if alpha == 0.0 or self.critic is None:
            return mlp_batched_forward(self.surrogate, Z)
        penalty = self.ref_exp - mlp_batched_forward(self.critic, Z)
        if alpha >= 1.0:
            return -penalty
        lam = alpha / (1.0 - alpha)
        return mlp_batched_forward(self.surrogate, Z) - lam * penalty

    def ascent_direction(self, Z: np.ndarray, alpha: float) -> np.ndarray:
        """Gradient of the value with respect to the inputs, batched."""
        if alpha == 0.0 or self.critic is None:
            return mlp_batched_forward_and_input_grads(self.surrogate, Z)[1]
        gc = mlp_batched_forward_and_input_grads(self.critic, Z)[1]
        if alpha >= 1.0:
            return gc
        lam = alpha / (1.0 - alpha)
        gf = mlp_batched_forward_and_input_grads(self.surrogate, Z)[1]
        return gf + lam * gc


CRITIC_RESTARTS = 3


def _critic_init(d: int, seed: int, clip_bound: float) -> Mlp:
    """Fresh critic with fan-in-uniform weights rescaled into the clip box.

    Clipping a standard-scale initialization would park every weight at a
    corner of the clip hypercube, making training an initialization lottery.
    """
    dims = [d, 4 * d, d, 1]
    net = mlp_init(dims, seed=seed)
    for w, fan_in in zip(net.weights, dims[:-1]):
        w *= clip_bound * np.sqrt(fan_in)
    return net


def _mean_grad_norm(net: Mlp, X: np.ndarray) -> float:
    """Average input-gradient norm over a sample; the critic's working slope."""
    _, grads = mlp_batched_forward_and_input_grads(net, X)
    return max(float(np.linalg.norm(grads, axis=1).mean()), 1e-12)


def _needs_critic(cfg: RunConfig) -> bool:
    if cfg.optimizer in ("bo_qei", "grad_ascent", "anneal"):
        return False
    if cfg.alpha_mode == "off":
        return False
    if cfg.alpha_mode == "constant" and cfg.alpha_const == 0.0:
        return False
    return True


def _condition_of(cfg_mask, values):
    if cfg_mask is None:
        return None
    return (np.asarray(cfg_mask, dtype=bool), np.asarray(values, dtype=np.float64))


class _RunContext:
    """Shared wiring for one run: streams, critic lifecycle, alpha policy."""

    def __init__(
        self,
        dataset: OfflineDataset,
        surrogate: Mlp,
        cfg: RunConfig,
        seed: int,
        condition: tuple[np.ndarray, np.ndarray] | None,
    ):
        self.dataset = dataset
        self.surrogate = surrogate
        self.cfg = cfg
        self.seed = seed
        self.condition = condition
        self.d = surrogate.input_dim
        if dataset.designs.shape[1] != self.d:
            raise ValueError(
                f"surrogate input dim {self.d} does not match dataset dim {dataset.designs.shape[1]}"
            )
        self.ascr_rng = rngmod.stream(seed, rngmod.ASCR)
        self.gp_rng = rngmod.stream(seed, rngmod.GP)
        self.anneal_rng = rngmod.stream(seed, rngmod.ANNEAL)
        self.state = AscrState()
        self.traj = Trajectory(
            meta={
                "optimizer": cfg.optimizer,
                "alpha_mode": cfg.alpha_mode,
                "alpha_const": cfg.alpha_const,
                "seed": seed,
                "config": cfg.to_dict(),
            }
        )
        self.critic: Mlp | None = None
        if _needs_critic(cfg):
            self.critic = _critic_init(
                self.d, rngmod.derived_seed(seed, rngmod.CRITIC_INIT), cfg.critic.clip_bound
            )
        self.objective = _PenalizedObjective(surrogate, self.critic)

    def train_critic(self, t: int, Q: np.ndarray) -> None:
        if self.critic is None:
            return
        # Weight-clipped critics train into a local pattern that depends
        # heavily on the starting point, so each event runs a few restarts
        # (the warm-started incumbent plus fresh in-box inits) and keeps the
        # parameters with the best dual estimate.
        P = self.dataset.designs
        best_net, best_steps, best_val = None, 0, -np.inf
        for r in range(CRITIC_RESTARTS):
            seed = rngmod.derived_seed(self.seed, rngmod.CRITIC_TRAIN, t, r)
            cfg = dataclasses.replace(self.cfg.critic, seed=seed)
            start = self.critic if r == 0 else _critic_init(self.d, seed, cfg.clip_bound)
            net, steps, val = train_critic(start, P, Q, cfg)
            best_steps += steps
            if val > best_val:
                best_net, best_val = net, val
        self.critic = best_net
        # The penalty consumes the slope-normalized critic so that critic
        # scores read in distance units; the raw clipped net keeps training.
        scaled = scale_output(self.critic, 1.0 / _mean_grad_norm(self.critic, P))
        self.objective.critic = scaled
        self.objective.ref_exp = reference_expectation(scaled, P)
        self.traj.critic_events.append((t, best_steps, best_val))

    def maybe_retrain(self, t: int, Q: np.ndarray) -> None:
        n_gen = self.cfg.n_generator
        if self.critic is not None and n_gen is not None and t % n_gen == 0:
            self.train_critic(t, Q)

    def pick_alpha(self, t: int) -> float:
        cfg = self.cfg
        if cfg.alpha_mode == "off":
            return 0.0
        if cfg.alpha_mode == "constant":
            return cfg.alpha_const
        alpha = adaptive_scr(
            self.surrogate,
            self.objective.critic,
            self.objective.ref_exp,
            cfg.ascr,
            self.state,
            self.ascr_rng,
            iteration=t,
            condition=self.condition,
        )
        self.traj.probe_queries += cfg.ascr.budget
        return alpha

    def fill_condition(self, Z: np.ndarray) -> np.ndarray:
        if self.condition is None:
            return Z
        mask, values = self.condition
        Z = np.array(Z)
        Z[:, mask] = values[mask]
        return Z

    def free_mask(self) -> np.ndarray:
        if self.condition is None:
            return np.ones(self.d, dtype=bool)
        return ~self.condition[0]

    def finish(self) -> Trajectory:
        self.traj.alpha_events = list(self.state.history)
        return self.traj


def run_optimizer(
    dataset: OfflineDataset,
    surrogate: Mlp,
    cfg: RunConfig,
    seed: int,
    condition_mask: np.ndarray | None = None,
    condition_values: np.ndarray | None = None,
) -> Trajectory:
    """Dispatch one run; optimizers see only the dataset and the surrogate."""
    ctx = _RunContext(dataset, surrogate, cfg, seed, _condition_of(condition_mask, condition_values))
    if cfg.optimizer in ("gabo", "bo_qei"):
        return _bayesopt_loop(ctx)
    if cfg.optimizer in ("gaga", "grad_ascent"):
        return _gradient_loop(ctx)
    return _anneal_loop(ctx)


def run_gabo(dataset, surrogate, cfg: RunConfig, seed: int, **cond) -> Trajectory:
    if cfg.optimizer != "gabo":
        raise ValueError("run_gabo requires cfg.optimizer == 'gabo'")
    return run_optimizer(dataset, surrogate, cfg, seed, **cond)


def run_gaga(dataset, surrogate, cfg: RunConfig, seed: int, **cond) -> Trajectory:
    if cfg.optimizer != "gaga":
        raise ValueError("run_gaga requires cfg.optimizer == 'gaga'")
    return run_optimizer(dataset, surrogate, cfg, seed, **cond)


def run_anneal(dataset, surrogate, cfg: RunConfig, seed: int, **cond) -> Trajectory:
    if cfg.optimizer != "anneal":
        raise ValueError("run_anneal requires cfg.optimizer == 'anneal'")
    return run_optimizer(dataset, surrogate, cfg, seed, **cond)


def run_pure_critic(dataset, surrogate, cfg: RunConfig, seed: int, **cond) -> Trajectory:
    """The alpha = 1 limit: the loop optimizes the critic score alone."""
    if not (cfg.alpha_mode == "constant" and cfg.alpha_const == 1.0):
        raise ValueError("run_pure_critic requires alpha_mode constant(1.0)")
    return run_optimizer(dataset, surrogate, cfg, seed, **cond)


def run_conditional(
    dataset: OfflineDataset,
    surrogate: Mlp,
    cfg: RunConfig,
    seed: int,
    condition_mask: np.ndarray,
    conditions: np.ndarray,
) -> list[Trajectory]:
    """One independent run per condition row (e.g., per patient)."""
    out = []
    for i, row in enumerate(conditions):
        out.append(
            run_optimizer(
                dataset,
                surrogate,
                cfg,
                rngmod.derived_seed(seed, rngmod.PATIENT, i),
                condition_mask=condition_mask,
                condition_values=row,
            )
        )
    return out


def _acquire_bounds(dataset: OfflineDataset, free: np.ndarray) -> np.ndarray:
    """Per-dimension acquisition box: the data support, capped at +/- 4."""
    lo = np.maximum(dataset.designs[:, free].min(axis=0), -ACQUIRE_BOUND)
    hi = np.minimum(dataset.designs[:, free].max(axis=0), ACQUIRE_BOUND)
    return np.column_stack([lo, hi])


def _bayesopt_loop(ctx: _RunContext) -> Trajectory:
    cfg = ctx.cfg
    free = ctx.free_mask()
    bounds = _acquire_bounds(ctx.dataset, free)

    pool01 = sobol_sample(cfg.b, int(free.sum()), seed=int(ctx.gp_rng.integers(2**63 - 1)))
    Z = np.zeros((cfg.b, ctx.d))
    Z[:, free] = bounds[:, 0] + pool01 * (bounds[:, 1] - bounds[:, 0])
    Z = ctx.fill_condition(Z)

    ctx.train_critic(1, Z)
    alpha = ctx.pick_alpha(1)
    ys = ctx.objective.values(Z, alpha)
    ctx.traj.add_batch(1, Z, ys, alpha)

    X_all, y_all = Z, ys
    acq = dataclasses.replace(cfg.acquire, batch=cfg.b)
    for t in range(2, cfg.T + 1):
        gp = gp_fit(X_all[:, free], y_all)
        cand_free = qei_acquire(gp, float(y_all.max()), acq, bounds, ctx.gp_rng)
        Z = np.zeros((cfg.b, ctx.d))
        Z[:, free] = cand_free
        Z = ctx.fill_condition(Z)
        alpha = ctx.pick_alpha(t)
        ys = ctx.objective.values(Z, alpha)
        ctx.traj.add_batch(t, Z, ys, alpha)
        X_all = np.concatenate([X_all, Z], axis=0)
        y_all = np.concatenate([y_all, ys])
        ctx.maybe_retrain(t, Z)
    return ctx.finish()


def _top_b_offline(dataset: OfflineDataset, b: int) -> np.ndarray:
    if b > dataset.size:
        raise ValueError(f"batch {b} exceeds offline dataset size {dataset.size}")
    order = np.argsort(-dataset.scores, kind="stable")
    return dataset.designs[order[:b]].copy()


def gaga_step(
    Z: np.ndarray,
    alpha: float,
    surrogate: Mlp,
    critic: Mlp | None,
    eta: float,
    free: np.ndarray | None = None,
    ref_exp: float = 0.0,
) -> np.ndarray:
    """One first-order update of every particle on the penalized objective."""
    obj = _PenalizedObjective(surrogate, critic)
    obj.ref_exp = ref_exp
    step = eta * obj.ascent_direction(Z, alpha)
    if free is not None:
        step = step * free
    return Z + step


def _gradient_loop(ctx: _RunContext) -> Trajectory:
    cfg = ctx.cfg
    free = ctx.free_mask()
    Z = ctx.fill_condition(_top_b_offline(ctx.dataset, cfg.b))

    ctx.train_critic(1, Z)
    alpha = ctx.pick_alpha(1)
    ys = ctx.objective.values(Z, alpha)
    ctx.traj.add_batch(1, Z, ys, alpha)

    for t in range(2, cfg.T + 1):
        step = cfg.eta * ctx.objective.ascent_direction(Z, alpha)
        Z = Z + step * free
        alpha = ctx.pick_alpha(t)
        ys = ctx.objective.values(Z, alpha)
        ctx.traj.add_batch(t, Z, ys, alpha)
        ctx.maybe_retrain(t, Z)
    return ctx.finish()


def anneal_accept_probability(dy: float, temperature: float) -> float:
    """Metropolis rule: improvements always accepted, else exp(dy / temp)."""
    if dy > 0:
        return 1.0
    return float(np.exp(max(dy / max(temperature, 1e-300), -700.0)))


def _anneal_loop(ctx: _RunContext) -> Trajectory:
    cfg = ctx.cfg
    free = ctx.free_mask()
    Z = ctx.fill_condition(_top_b_offline(ctx.dataset, cfg.b))
    y = ctx.objective.values(Z, 0.0)

    temp0 = max(float(ctx.dataset.std_scores.std()), cfg.anneal_floor)
    ratio = (cfg.anneal_floor / temp0) ** (1.0 / max(cfg.T - 1, 1))
    rng = ctx.anneal_rng
    for t in range(1, cfg.T + 1):
        temp = temp0 * ratio ** (t - 1)
        prop = Z + cfg.anneal_step * rng.standard_normal(Z.shape) * free
        yp = ctx.objective.values(prop, 0.0)
        ctx.traj.add_batch(t, prop, yp, 0.0)
        dy = yp - y
        accept = (dy > 0) | (rng.uniform(size=len(Z)) < np.exp(np.clip(dy / temp, -700.0, 0.0)))
        Z = np.where(accept[:, None], prop, Z)
        y = np.where(accept, yp, y)
    return ctx.finish()
