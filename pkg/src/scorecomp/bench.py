"""Endpoint-reaching tasks used as the reward signal of the weight search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import EstimatorSpec, FieldError, GaussianMixture, ScoreField, make_estimator
from .sampler import sample
from .schedule import NoiseSchedule

METRICS = ("success-rate", "energy-distance")


@dataclass
class BenchTask:
    target: np.ndarray
    radius: float
    data: GaussianMixture
    horizon: int = 100
    metric: str = "success-rate"

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        if self.radius <= 0:
            raise ValueError("success radius must be positive")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.data.dim != self.target.size:
            raise ValueError("target and data law disagree in dimension")

    @property
    def dim(self) -> int:
        return self.target.size


@dataclass
class BenchResult:
    success_rate: float
    se: float
    metric_value: float
    rewards: np.ndarray


def successes(task: BenchTask, endpoints: np.ndarray) -> np.ndarray:
    return (np.linalg.norm(endpoints - task.target, axis=1) <= task.radius).astype(float)


def run_bench(
    task: BenchTask,
    field: ScoreField,
    n_episodes: int,
    solver: str = "ddim",
    seed: int = 0,
    schedule: NoiseSchedule | None = None,
) -> BenchResult:
    """Sample ``n_episodes`` endpoints and score them against the task.

    The metric value is the success rate, or the energy distance to an equally
    sized batch from the data law when ``task.metric == "energy-distance"``.
    """
    if field.dim != task.dim:
        raise FieldError("field and task dimensions differ")
    schedule = schedule or field.schedule
    ends = sample(field, schedule, solver, task.horizon, n_episodes, seed, record="ends").terminal
    rewards = successes(task, ends)
    sr = float(rewards.mean()) if n_episodes else 0.0
    se = float(rewards.std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    metric = sr
    if task.metric == "energy-distance":
        ref = task.data.sample(n_episodes, np.random.default_rng([seed, 1]))
        metric = energy_distance(ends, ref)
    return BenchResult(sr, se, metric, rewards)


def task_evaluator(task: BenchTask, solver: str = "ddim", schedule: NoiseSchedule | None = None):
    """Adapter for :func:`scorecomp.search.grid_search`: per-episode 0/1 rewards."""

    def evaluate(field, n_episodes, seed):
        return run_bench(task, field, n_episodes, solver, seed, schedule).rewards

    return evaluate


def mean_shift_pair(task: BenchTask, schedule: NoiseSchedule, delta1, delta2, seed: int = 0):
    """Two policies that are exact scores of the data law shifted by ``delta1`` / ``delta2``."""
    specs = [
        EstimatorSpec(task.data, "mean-shift", np.asarray(d, dtype=float), name=f"policy{i + 1}")
        for i, d in enumerate((delta1, delta2))
    ]
    return [make_estimator(s, schedule, seed) for s in specs]


def _pairwise_sum(X, Y, block=2048):
    total = 0.0
    for i in range(0, len(X), block):
        diff = X[i : i + block, None, :] - Y[None, :, :]
        total += np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).sum()
    return total


def energy_distance(A, B) -> float:
    """V-statistic ``2 E|X - Y| - E|X - X'| - E|Y - Y'|``; zero for identical batches."""
    A, B = np.atleast_2d(np.asarray(A, float)), np.atleast_2d(np.asarray(B, float))
    if len(A) == 0 or len(B) == 0:
        raise ValueError("energy distance needs nonempty batches")
    if A.shape[1] != B.shape[1]:
        raise ValueError("batches disagree in dimension")
    n, m = len(A), len(B)
    xy = _pairwise_sum(A, B) / (n * m)
    xx = _pairwise_sum(A, A) / (n * n)
    yy = _pairwise_sum(B, B) / (m * m)
    return float(max(2.0 * xy - xx - yy, 0.0))


@dataclass
class PermutationTest:
    statistic: float
    threshold: float
    p_value: float
    null: np.ndarray

    @property
    def rejects(self) -> bool:
        return self.statistic > self.threshold


def energy_permutation_test(A, B, n_perm: int = 200, seed: int = 0, level: float = 0.95, block: int = 1024):
    """Permutation null of the energy distance.

    The pooled distance matrix is streamed in row blocks and multiplied
    against all label vectors at once, so memory stays ``O(block * n)``.
    """
    A, B = np.asarray(A, float), np.asarray(B, float)
    Z = np.vstack([A, B])
    n, m = len(A), len(B)
    N = n + m
    rng = np.random.default_rng(seed)
    labels = np.zeros((N, n_perm + 1))
    labels[:n, 0] = 1.0
    for j in range(1, n_perm + 1):
        labels[rng.permutation(N)[:n], j] = 1.0
    DL = np.zeros((N, n_perm + 1))
    total = 0.0
    sq = np.einsum("ij,ij->i", Z, Z)
    for i in range(0, N, block):
        blk = Z[i : i + block]
        d2 = sq[i : i + block, None] + sq[None, :] - 2.0 * blk @ Z.T
        D = np.sqrt(np.maximum(d2, 0.0))
        DL[i : i + block] = D @ labels
        total += D.sum()
    s_aa = np.einsum("ij,ij->j", labels, DL)  # l' D l
    row = DL.sum(axis=0)  # 1' D l
    s_ab = row - s_aa
    s_bb = total - 2.0 * s_ab - s_aa
    stats = 2.0 * s_ab / (n * m) - s_aa / n**2 - s_bb / m**2
    null = stats[1:]
    thr = float(np.quantile(null, level))
    p = float((1 + np.sum(null >= stats[0])) / (n_perm + 1))
    return PermutationTest(float(stats[0]), thr, p, null)
