"""Post-run scoring: top-k selection, oracle evaluation, rank aggregation.

Selection always ranks by the stored penalized objective values (at their
evaluation-time penalty weight); only the selected designs are decoded and
scored with the oracle. All functions are read-only on trajectories.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from gambo.optimizers import Record, Trajectory
from gambo.tasks import Task


def _ranked_records(traj: Trajectory) -> list[Record]:
    """Records sorted best-first by stored value; ties go to earlier records."""
    return sorted(traj.records, key=lambda r: (-r.y, r.iteration, r.index))


def select_top_k(traj: Trajectory, k: int) -> list[Record]:
    """The k records with the highest stored penalized values."""
    if k <= 0:
        raise ValueError("k must be positive")
    if k > len(traj.records):
        raise ValueError(f"k={k} exceeds record count {len(traj.records)}")
    return _ranked_records(traj)[:k]


def oracle_eval(task: Task, designs: list[np.ndarray], k: int) -> float:
    """Decode each design, query the oracle, and return the maximum score."""
    if len(designs) != k:
        raise ValueError(f"expected {k} designs, got {len(designs)}")
    return max(task.oracle(task.decode(z)) for z in designs)


def top_k_oracle(traj: Trajectory, task: Task, k: int) -> float:
    """Oracle score of the best of the top-k records by penalized value."""
    return oracle_eval(task, [r.z for r in select_top_k(traj, k)], k)


def percentile_design_eval(traj: Trajectory, task: Task, pct: float = 90.0) -> float:
    """Oracle score of the single pct-th percentile record by stored value.

    Index convention: floor(pct/100 * (N-1)) on the ascending ranking;
    pct=100 selects the same record as top-1 selection.
    """
    ranked = _ranked_records(traj)  # best first
    n = len(ranked)
    idx_from_top = (n - 1) - int(np.floor(pct / 100.0 * (n - 1)))
    rec = ranked[idx_from_top]
    return float(task.oracle(task.decode(rec.z)))


def distance_covariance(a: np.ndarray, b: np.ndarray) -> float:
    """Empirical distance covariance between two scalar samples.

    Square root of the mean elementwise product of the double-centered
    pairwise-distance matrices, clamped at zero for roundoff.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ValueError("samples must have equal length")
    if len(a) < 2:
        raise ValueError("need at least two observations")
    A = _double_centered(np.abs(a[:, None] - a[None, :]))
    B = _double_centered(np.abs(b[:, None] - b[None, :]))
    return float(np.sqrt(max((A * B).mean(), 0.0)))


def _double_centered(D: np.ndarray) -> np.ndarray:
    row = D.mean(axis=1, keepdims=True)
    col = D.mean(axis=0, keepdims=True)
    return D - row - col + D.mean()


def trajectory_dcov(traj: Trajectory, task: Task) -> float:
    """Dependence between stored penalized values and true oracle scores."""
    oracle_scores = np.array([task.oracle(task.decode(r.z)) for r in traj.records])
    return distance_covariance(traj.scores, oracle_scores)


def budget_curve(traj: Trajectory, task: Task, ks: list[int]) -> list[tuple[int, float]]:
    """Oracle score of the top-k selection for each query budget k."""
    if list(ks) != sorted(ks):
        raise ValueError("ks must be sorted ascending")
    ranked = _ranked_records(traj)
    out = []
    scores: list[float] = []
    for k in ks:
        while len(scores) < k:
            rec = ranked[len(scores)]
            scores.append(task.oracle(task.decode(rec.z)))
        out.append((k, max(scores[:k])))
    return out


@dataclasses.dataclass
class EvalReport:
    """Per-(method, task) scores across seeds."""

    method: str
    task: str
    seeds: list[int]
    top1: list[float]
    top128: list[float]
    p90: list[float]

    def mean_std(self, metric: str) -> tuple[float, float]:
        vals = np.asarray(getattr(self, metric), dtype=np.float64)
        return float(vals.mean()), float(vals.std())


def rank_table(reports: list[EvalReport], metric: str = "top1") -> list[dict]:
    """Per-task method ranks by mean score (1 = best; ties share mean rank)."""
    if len({r.method for r in reports}) < 2:
        raise ValueError("need at least two methods to rank")
    tasks = sorted({r.task for r in reports})
    methods = sorted({r.method for r in reports})
    ranks: dict[str, list[float]] = {m: [] for m in methods}
    for task in tasks:
        rows = [r for r in reports if r.task == task]
        means = {r.method: r.mean_std(metric)[0] for r in rows}
        present = sorted(means)
        scores = np.array([means[m] for m in present])
        order = (-scores).argsort(kind="stable")
        rank_vals = np.empty(len(present))
        rank_vals[order] = np.arange(1, len(present) + 1)
        # ties share the mean of the tied ranks
        for s in np.unique(scores):
            tied = scores == s
            if tied.sum() > 1:
                rank_vals[tied] = rank_vals[tied].mean()
        for m, rv in zip(present, rank_vals):
            ranks[m].append(float(rv))
    return [
        {
            "method": m,
            "per_task": dict(zip(tasks, ranks[m])),
            "avg_rank": float(np.mean(ranks[m])) if ranks[m] else float("nan"),
        }
        for m in methods
    ]


def write_scores_csv(reports: list[EvalReport], path) -> None:
    """Columns: method, task, seed, top1, top128, p90."""
    with open(path, "w") as fh:
        fh.write("method,task,seed,top1,top128,p90\n")
        for r in sorted(reports, key=lambda r: (r.method, r.task)):
            for seed, t1, t128, p90 in zip(r.seeds, r.top1, r.top128, r.p90):
                fh.write(f"{r.method},{r.task},{seed},{t1!r},{t128!r},{p90!r}\n")


def write_ranks_csv(rows: list[dict], path) -> None:
    """Columns: method, <one per task>, avg_rank."""
    tasks = sorted(rows[0]["per_task"]) if rows else []
    with open(path, "w") as fh:
        fh.write("method," + ",".join(tasks) + ",avg_rank\n")
        for row in rows:
            cells = [repr(row["per_task"][t]) for t in tasks]
            fh.write(f"{row['method']}," + ",".join(cells) + f",{row['avg_rank']!r}\n")


def write_curve_csv(curve: list[tuple[int, float]], path) -> None:
    """Columns: k, score."""
    with open(path, "w") as fh:
        fh.write("k,score\n")
        for k, score in curve:
            fh.write(f"{k},{score!r}\n")


def write_dcov_csv(rows: list[tuple[str, str, int, float]], path) -> None:
    """Columns: method, task, seed, dcov."""
    with open(path, "w") as fh:
        fh.write("method,task,seed,dcov\n")
        for method, task, seed, val in rows:
            fh.write(f"{method},{task},{seed},{val!r}\n")
