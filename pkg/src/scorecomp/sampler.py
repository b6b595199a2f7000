"""Reverse-time sampling and paired-trajectory simulation."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .oracle import FieldError, ScoreField
from .schedule import NoiseSchedule, SOLVERS, ScheduleError, step_coefficients, time_grid


@dataclass
class Trajectory:
    grid: np.ndarray
    states: np.ndarray
    solver: str
    seed: int

    def __post_init__(self):
        if len(self.grid) != len(self.states):
            raise ValueError("one state per grid node required")
        if np.any(np.diff(self.grid) >= 0):
            raise ValueError("time grid must be strictly decreasing")


@dataclass
class TrajectoryBatch:
    """A batch of trajectories sharing a grid.

    ``states`` has shape ``(len(grid), n, d)`` when the full path is recorded;
    with ``record="ends"`` only the first and last node are kept and
    ``grid`` holds just those two times.
    """

    grid: np.ndarray
    states: np.ndarray
    solver: str
    seed: int

    def __len__(self):
        return self.states.shape[1]

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(self.grid.copy(), self.states[:, i, :].copy(), self.solver, self.seed)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def _streams(seed):
    init, steps, field = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(steps), np.random.default_rng(field))


def sample(
    field: ScoreField,
    schedule: NoiseSchedule,
    solver: str,
    n_steps: int,
    n_samples: int,
    seed: int = 0,
    *,
    t_max: float = 1.0,
    t_min: float = 0.0,
    x_init=None,
    record: str = "full",
) -> TrajectoryBatch:
    """Integrate ``n_samples`` trajectories from ``N(0, I)`` at ``t_max`` to ``t_min``.

    ``flow-euler`` consumes the field's velocity prediction, every other solver
    its score. Initial noise, solver noise and per-call field noise come from
    three independent streams derived from ``seed``.
    """
    if solver not in SOLVERS:
        raise ScheduleError(f"unknown solver {solver!r}")
    if record not in ("full", "ends"):
        raise ValueError("record must be 'full' or 'ends'")
    grid = time_grid(n_steps, t_max, t_min)
    init_rng, step_rng, field_rng = _streams(seed)
    d = field.dim
    if x_init is None:
        x = init_rng.standard_normal((n_samples, d))
    else:
        x = np.array(x_init, dtype=float).reshape(n_samples, d)
    path = [x] if record == "full" else None
    first = x.copy()
    for t_from, t_to in zip(grid[:-1], grid[1:]):
        if solver == "flow-euler":
            x = x + (t_to - t_from) * field.predict(t_from, x, "velocity", rng=field_rng)
        else:
            coef = step_coefficients(schedule, solver, t_from, t_to)
            s = field.score(t_from, x, rng=field_rng)
            z = None if coef.deterministic else step_rng.standard_normal(x.shape)
            x = coef.apply(x, s, z)
        if record == "full":
            path.append(x)
    if record == "full":
        return TrajectoryBatch(grid, np.stack(path), solver, seed)
    return TrajectoryBatch(grid[[0, -1]], np.stack([first, x]), solver, seed)


@dataclass(frozen=True)
class OdeDynamics:
    """Deterministic reverse dynamics ``dx/dt = f(t) x + h(t) s`` of a schedule.

    ``convention="pf"`` is the probability-flow ODE ``F = f x - g^2 s / 2``;
    ``convention="full"`` uses ``F = f x - g^2 s``. ``F`` is affine in ``s``
    with ``L_x = |f|`` and ``L_s = |h|``.
    """

    schedule: NoiseSchedule
    convention: str = "pf"

    def __post_init__(self):
        if self.convention not in ("pf", "full"):
            raise ValueError("convention must be 'pf' or 'full'")

    def coeffs(self, t):
        f, h = self.schedule.pf_drift_coeffs(t)
        return f, (h if self.convention == "pf" else 2.0 * h)

    def drift(self, t, x, s):
        f, h = (float(c) for c in self.coeffs(t))
        return f * x + h * s

    def lipschitz_x(self, t):
        return np.abs(self.coeffs(t)[0])

    def lipschitz_s(self, t):
        return np.abs(self.coeffs(t)[1])


@dataclass
class PairResult:
    star: TrajectoryBatch
    hat: TrajectoryBatch
    errors: np.ndarray

    @property
    def terminal_error(self) -> float:
        return float(self.errors[0]) if self.errors.size == 1 else float(self.errors.mean())


def simulate_pair(
    oracle: ScoreField,
    estimator: ScoreField,
    dynamics: OdeDynamics,
    n_steps: int,
    seed: int = 0,
    *,
    n_pairs: int = 1,
    x_init=None,
    t_max: float = 1.0,
    t_min: float = 0.0,
    record: str = "full",
) -> PairResult:
    """Euler-integrate the oracle and estimator flows from shared initial states.

    Per-call estimator noise is drawn from generators created from the same
    seed for both members, so stochastic pairs use common random numbers.
    """
    if oracle.dim != estimator.dim:
        raise FieldError("oracle and estimator dimensions differ")
    grid = time_grid(n_steps, t_max, t_min)
    init_rng, _, _ = _streams(seed)
    d = oracle.dim
    x0 = init_rng.standard_normal((n_pairs, d)) if x_init is None else np.array(x_init, float).reshape(n_pairs, d)
    rng_star = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    rng_hat = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    xs, xh = x0.copy(), x0.copy()
    ps, ph = [xs], [xh]
    for t_from, t_to in zip(grid[:-1], grid[1:]):
        dt = t_to - t_from
        xs = xs + dt * dynamics.drift(t_from, xs, oracle.score(t_from, xs, rng=rng_star))
        xh = xh + dt * dynamics.drift(t_from, xh, estimator.score(t_from, xh, rng=rng_hat))
        if record == "full":
            ps.append(xs)
            ph.append(xh)
    if record == "full":
        star = TrajectoryBatch(grid, np.stack(ps), "euler", seed)
        hat = TrajectoryBatch(grid, np.stack(ph), "euler", seed)
    else:
        ends = grid[[0, -1]]
        star = TrajectoryBatch(ends, np.stack([x0, xs]), "euler", seed)
        hat = TrajectoryBatch(ends, np.stack([x0, xh]), "euler", seed)
    return PairResult(star, hat, np.linalg.norm(xh - xs, axis=1))


def write_jsonl(batch: TrajectoryBatch, path, tags: dict | None = None) -> None:
    """One JSON record per trajectory: grid, states and tags."""
    tags = tags or {}
    grid = [float(v) for v in batch.grid]
    with open(path, "w") as fh:
        for i in range(len(batch)):
            rec = {
                "id": i,
                "solver": batch.solver,
                "seed": batch.seed,
                "grid": grid,
                "states": batch.states[:, i, :].tolist(),
                **tags,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_endpoints_csv(points: np.ndarray, path) -> None:
    points = np.asarray(points, dtype=float)
    d = points.shape[1] if points.ndim == 2 else 0
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"x{j}" for j in range(d)])
        for i, row in enumerate(points):
            w.writerow([i] + [repr(float(v)) for v in row])
