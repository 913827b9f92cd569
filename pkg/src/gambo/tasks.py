"""Oracle-exact benchmark tasks and offline dataset construction.

Each task bundles a hidden oracle, an offline dataset, and an embedder
between the native design space and a standardized optimization space, so
that a standard-normal prior and a fixed acquisition box cover the data
region. Optimizers never touch the oracle; scoring happens in the
evaluation layer.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8

DATASET_SCHEMA_VERSION = 1


def standardize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Per-dimension (x - mean) / std."""
    return (np.asarray(x, dtype=np.float64) - mean) / std


def destandardize(z: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Inverse of standardize."""
    return np.asarray(z, dtype=np.float64) * std + mean


@dataclasses.dataclass
class OfflineDataset:
    """Frozen (design, score) pairs plus standardization statistics.

    ``designs`` live in the standardized optimization space; ``raw_designs``
    in the native design space (one-hot expanded for discrete tasks).
    """

    designs: np.ndarray
    raw_designs: np.ndarray
    scores: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def __post_init__(self) -> None:
        if len(self.designs) < 1:
            raise ValueError("dataset must be non-empty")
        if not np.isfinite(self.scores).all():
            raise ValueError("scores must be finite")

    @property
    def size(self) -> int:
        return len(self.designs)

    @property
    def std_scores(self) -> np.ndarray:
        return (self.scores - self.y_mean) / self.y_std


def _make_dataset(raw_embedded: np.ndarray, raw_designs: np.ndarray, scores: np.ndarray) -> OfflineDataset:
    x_mean = raw_embedded.mean(axis=0)
    x_std = np.maximum(raw_embedded.std(axis=0), STD_FLOOR)
    y_mean = float(scores.mean())
    y_std = max(float(scores.std()), STD_FLOOR)
    return OfflineDataset(
        designs=standardize(raw_embedded, x_mean, x_std),
        raw_designs=raw_designs,
        scores=scores.astype(np.float64),
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
    )


@dataclasses.dataclass
class Task:
    """A named optimization problem with hidden oracle and frozen dataset.

    ``condition_mask`` (True = fixed coordinate) and ``eval_conditions``
    (standardized rows carrying the fixed coordinates of each evaluation
    case) are set only for conditional tasks.
    """

    name: str
    design_dim: int
    opt_dim: int
    dataset: OfflineDataset
    encode: Callable[[np.ndarray], np.ndarray]
    decode: Callable[[np.ndarray], np.ndarray]
    oracle: Callable[[np.ndarray], float]
    condition_mask: np.ndarray | None = None
    eval_conditions: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Branin


BRANIN_BOUNDS = np.array([[-5.0, 10.0], [0.0, 15.0]])


def branin_value(x1: float, x2: float) -> float:
    """The standard two-dimensional Branin function (minimization form)."""
    a = 1.0
    b = 5.1 / (4.0 * np.pi**2)
    c = 5.0 / np.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * np.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1.0 - t) * np.cos(x1) + s


def branin_oracle(x: np.ndarray) -> float:
    """Negated Branin on the clamped input box (maximization convention)."""
    x = np.asarray(x, dtype=np.float64).reshape(2)
    if not np.isfinite(x).all():
        raise ValueError(f"non-finite input {x}")
    clamped = np.clip(x, BRANIN_BOUNDS[:, 0], BRANIN_BOUNDS[:, 1])
    if not np.array_equal(clamped, x):
        log.debug("branin input %s clamped to %s", x, clamped)
    return -float(branin_value(clamped[0], clamped[1]))


def build_branin_dataset(n_raw: int = 1000, seed: int = 0) -> OfflineDataset:
    """Uniform box sample, oracle-scored, with the top 20% by score removed."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(BRANIN_BOUNDS[:, 0], BRANIN_BOUNDS[:, 1], size=(n_raw, 2))
    scores = np.array([branin_oracle(x) for x in X])
    n_remove = int(round(0.2 * n_raw))
    order = np.argsort(scores)  # ascending; drop the top n_remove
    keep = order[: n_raw - n_remove]
    return _make_dataset(X[keep], X[keep], scores[keep])


def build_branin_task(seed: int = 0, n_raw: int = 1000) -> Task:
    ds = build_branin_dataset(n_raw=n_raw, seed=seed)

    def encode(x: np.ndarray) -> np.ndarray:
        return standardize(x, ds.x_mean, ds.x_std)

    def decode(z: np.ndarray) -> np.ndarray:
        x = destandardize(z, ds.x_mean, ds.x_std)
        return np.clip(x, BRANIN_BOUNDS[:, 0], BRANIN_BOUNDS[:, 1])

    return Task("branin", 2, 2, ds, encode, decode, branin_oracle)


# ---------------------------------------------------------------------------
# Discrete motif (8-symbol sequences over a 4-letter vocabulary)


MOTIF_LENGTH = 8
MOTIF_VOCAB = 4


def motif_raw_score(seq: np.ndarray, pwm: np.ndarray, pairs: np.ndarray) -> float:
    """Position-weight plus adjacent-pair interaction score, unnormalized."""
    seq = np.asarray(seq)
    pos = float(pwm[np.arange(MOTIF_LENGTH), seq].sum())
    pair = float(pairs[np.arange(MOTIF_LENGTH - 1), seq[:-1], seq[1:]].sum())
    return pos + pair


def enumerate_motif_scores(pwm: np.ndarray, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw scores of every sequence (vocab^length rows), vectorized."""
    n = MOTIF_VOCAB**MOTIF_LENGTH
    codes = np.arange(n)
    seqs = np.empty((n, MOTIF_LENGTH), dtype=np.int64)
    for i in range(MOTIF_LENGTH):
        seqs[:, MOTIF_LENGTH - 1 - i] = (codes // MOTIF_VOCAB**i) % MOTIF_VOCAB
    scores = pwm[np.arange(MOTIF_LENGTH), seqs].sum(axis=1)
    scores += pairs[np.arange(MOTIF_LENGTH - 1), seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def _motif_tables(seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    pwm = rng.standard_normal((MOTIF_LENGTH, MOTIF_VOCAB))
    pairs = 0.5 * rng.standard_normal((MOTIF_LENGTH - 1, MOTIF_VOCAB, MOTIF_VOCAB))
    return pwm, pairs


def _one_hot(seqs: np.ndarray) -> np.ndarray:
    out = np.zeros((len(seqs), MOTIF_LENGTH * MOTIF_VOCAB))
    rows = np.repeat(np.arange(len(seqs)), MOTIF_LENGTH)
    cols = (np.arange(MOTIF_LENGTH) * MOTIF_VOCAB + seqs).ravel()
    out[rows, cols] = 1.0
    return out


def build_motif_task(seed: int = 0, n_raw: int = 8192) -> Task:
    """Sequence task with the bottom half of a uniform sample as offline data."""
    pwm, pairs = _motif_tables(seed)
    _, all_scores = enumerate_motif_scores(pwm, pairs)
    lo, hi = float(all_scores.min()), float(all_scores.max())
    span = hi - lo

    def oracle_seq(seq: np.ndarray) -> float:
        seq = np.asarray(seq, dtype=np.int64).reshape(MOTIF_LENGTH)
        if seq.min() < 0 or seq.max() >= MOTIF_VOCAB:
            raise ValueError(f"sequence symbols must lie in [0, {MOTIF_VOCAB}), got {seq}")
        return (motif_raw_score(seq, pwm, pairs) - lo) / span

    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    seqs = rng.integers(0, MOTIF_VOCAB, size=(n_raw, MOTIF_LENGTH))
    scores = np.array([oracle_seq(s) for s in seqs])
    order = np.argsort(scores)
    keep = order[: n_raw // 2]  # bottom half
    ds = _make_dataset(_one_hot(seqs[keep]), seqs[keep].astype(np.float64), scores[keep])

    def encode(seq: np.ndarray) -> np.ndarray:
        return standardize(_one_hot(np.asarray(seq, dtype=np.int64)[None, :])[0], ds.x_mean, ds.x_std)

    def decode(z: np.ndarray) -> np.ndarray:
        logits = destandardize(z, ds.x_mean, ds.x_std).reshape(MOTIF_LENGTH, MOTIF_VOCAB)
        return logits.argmax(axis=1)

    def oracle_design(design: np.ndarray) -> float:
        return oracle_seq(design)

    return Task("motif", MOTIF_LENGTH, MOTIF_LENGTH * MOTIF_VOCAB, ds, encode, decode, oracle_design)


# ---------------------------------------------------------------------------
# Conditional dosing (1 free dose dimension, 8 fixed covariate dimensions)


DOSING_COVARIATES = 8
DOSING_MIN_BASELINE_COST = 0.1
DOSING_HISTORICAL_NOISE = 0.3


def dosing_score(dose: float, covariates: np.ndarray, w: np.ndarray, b: float, mean_dose: float) -> float:
    """Normalized improvement of a dose over the historical mean dose.

    With target dose d* = w.covariates + b and cost c(z) = (z - d*)^2, the
    score is [c(mean_dose) - c(dose)] / c(mean_dose): 1 at the target dose,
    0 at the mean dose, negative when worse than the mean dose.
    """
    target = float(w @ covariates + b)
    c_base = (mean_dose - target) ** 2
    return (c_base - (dose - target) ** 2) / c_base


def build_dosing_task(
    seed: int = 0, n_train: int = 512, n_eval_patients: int = 50
) -> Task:
    """Conditional task: optimize the dose coordinate per evaluation patient.

    Historical records carry noisy doses around each patient's target; the
    mean historical dose is frozen from the initial draw. Patients whose
    baseline cost falls below a floor are regenerated at build time so the
    normalized score stays well-conditioned.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    w = rng.standard_normal(DOSING_COVARIATES) / np.sqrt(DOSING_COVARIATES)
    b = float(rng.standard_normal())

    covs = rng.standard_normal((n_train, DOSING_COVARIATES))
    targets = covs @ w + b
    doses = targets + DOSING_HISTORICAL_NOISE * rng.standard_normal(n_train)
    mean_dose = float(doses.mean())

    def draw_patient() -> tuple[np.ndarray, float]:
        while True:
            x = rng.standard_normal(DOSING_COVARIATES)
            target = float(w @ x + b)
            if (mean_dose - target) ** 2 >= DOSING_MIN_BASELINE_COST:
                return x, target

    for i in range(n_train):
        if (mean_dose - targets[i]) ** 2 < DOSING_MIN_BASELINE_COST:
            covs[i], targets[i] = draw_patient()
            doses[i] = targets[i] + DOSING_HISTORICAL_NOISE * rng.standard_normal()

    scores = np.array(
        [dosing_score(doses[i], covs[i], w, b, mean_dose) for i in range(n_train)]
    )
    raw = np.column_stack([doses, covs])
    ds = _make_dataset(raw, raw, scores)

    def encode(design: np.ndarray) -> np.ndarray:
        return standardize(design, ds.x_mean, ds.x_std)

    def decode(z: np.ndarray) -> np.ndarray:
        return destandardize(z, ds.x_mean, ds.x_std)

    def oracle_design(design: np.ndarray) -> float:
        design = np.asarray(design, dtype=np.float64).reshape(1 + DOSING_COVARIATES)
        return dosing_score(design[0], design[1:], w, b, mean_dose)

    eval_rows = np.zeros((n_eval_patients, 1 + DOSING_COVARIATES))
    for i in range(n_eval_patients):
        x, _ = draw_patient()
        eval_rows[i, 1:] = x
        eval_rows[i, 0] = mean_dose  # placeholder; the dose coordinate is free
    mask = np.zeros(1 + DOSING_COVARIATES, dtype=bool)
    mask[1:] = True
    return Task(
        "dosing",
        1 + DOSING_COVARIATES,
        1 + DOSING_COVARIATES,
        ds,
        encode,
        decode,
        oracle_design,
        condition_mask=mask,
        eval_conditions=standardize(eval_rows, ds.x_mean, ds.x_std),
    )


# ---------------------------------------------------------------------------
# Registry and dataset serialization


TASK_BUILDERS: dict[str, Callable[..., Task]] = {
    "branin": build_branin_task,
    "motif": build_motif_task,
    "dosing": build_dosing_task,
}


def get_task(name: str, seed: int = 0, **kwargs) -> Task:
    """Build a registered task by name."""
    if name not in TASK_BUILDERS:
        raise KeyError(f"unknown task {name!r}; known tasks: {sorted(TASK_BUILDERS)}")
    return TASK_BUILDERS[name](seed=seed, **kwargs)


def save_dataset(ds: OfflineDataset, csv_path, stats_path) -> None:
    """CSV of raw designs and scores plus a JSON stats sidecar."""
    n, d_raw = ds.raw_designs.shape
    header = ",".join([f"x{i}" for i in range(d_raw)] + ["score"])
    body = np.column_stack([ds.raw_designs, ds.scores])
    with open(csv_path, "w") as fh:
        fh.write(header + "\n")
        for row in body:
            fh.write(",".join(repr(v) for v in row) + "\n")
    stats = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "x_mean": ds.x_mean.tolist(),
        "x_std": ds.x_std.tolist(),
        "y_mean": ds.y_mean,
        "y_std": ds.y_std,
        "size": n,
    }
    with open(stats_path, "w") as fh:
        json.dump(stats, fh, indent=2)
