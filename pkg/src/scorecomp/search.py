"""Test-time grid search over the weight of a two-policy composition."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .compose import CompositionSpec, compose
from .oracle import ScoreField
from .svg import line_plot

log = logging.getLogger(__name__)


@dataclass
class Cell:
    w: float
    episodes: int
    successes: int
    mean_reward: float
    se: float
    episode_seed: int
    cell_seed: int
    valid: bool = True
    error: str = ""


@dataclass
class RewardPool:
    cells: list

    def valid_cells(self):
        return [c for c in self.cells if c.valid]

    def best(self) -> Cell:
        """Highest mean reward; ties go to the smallest weight."""
        valid = self.valid_cells()
        if not valid:
            raise RuntimeError("no valid cells in the reward pool")
        return max(sorted(valid, key=lambda c: c.w), key=lambda c: c.mean_reward)

    def rewards(self):
        return {c.w: c.mean_reward for c in self.valid_cells()}

    def to_json(self) -> str:
        return json.dumps({"cells": [asdict(c) for c in self.cells]}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RewardPool":
        return cls([Cell(**c) for c in json.loads(text)["cells"]])


def weight_grid(step: float = 0.1) -> np.ndarray:
    n = round(1.0 / step)
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"grid step {step} does not divide 1 evenly")
    return np.round(np.linspace(0.0, 1.0, n + 1), 12)


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def grid_search(
    policies: Sequence[ScoreField],
    evaluator: Callable,
    grid_step: float = 0.1,
    episodes: int = 100,
    seed: int = 0,
    *,
    operator: str = "convex",
    workers: int = 1,
):
    """Evaluate ``R(w1)`` for ``w1`` on the grid and return ``(w1*, pool)``.

    ``evaluator(field, n_episodes, seed)`` returns per-episode rewards in
    [0, 1]. Every cell is evaluated with the same episode seed so all weights
    face identical initial noise; the per-cell seed derived from
    ``(seed, index)`` is recorded for cell-local randomness. A cell whose
    evaluator raises is marked invalid and skipped by the argmax.
    """
    if operator != "convex":
        raise ValueError("grid search is defined for the convex operator")
    if len(policies) != 2:
        raise ValueError("grid search composes exactly two policies")
    grid = weight_grid(grid_step)

    def run(item):
        idx, w = item
        cs = cell_seed(seed, idx)
        field = compose(CompositionSpec("convex", list(policies), [w, 1.0 - w]), name=f"w={w:g}")
        try:
            r = np.asarray(evaluator(field, episodes, seed), dtype=float)
        except Exception as err:  # evaluator failures are recorded, not raised
            log.warning("cell w=%g failed: %s", w, err)
            return Cell(float(w), episodes, 0, float("nan"), float("nan"), seed, cs, False, repr(err))
        se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else 0.0
        return Cell(float(w), int(r.size), int(np.count_nonzero(r > 0)), float(r.mean()), se, seed, cs)

    items = list(enumerate(grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run, items))
    else:
        cells = [run(it) for it in items]
    pool = RewardPool(cells)
    return pool.best().w, pool


def sweep_report(pool: RewardPool, out_dir=None, title: str = "reward vs weight"):
    """Table rows and SVG curve of ``R(w)``; written to ``out_dir`` when given."""
    if not pool.cells:
        raise ValueError("empty reward pool")
    header = ["w1", "w2", "episodes", "successes", "mean_reward", "se", "valid"]
    rows = [
        [repr(c.w), repr(round(1.0 - c.w, 12)), c.episodes, c.successes, repr(c.mean_reward), repr(c.se), int(c.valid)]
        for c in pool.cells
    ]
    valid = pool.valid_cells()
    svg = line_plot(
        [c.w for c in valid], [c.mean_reward for c in valid], [c.se for c in valid],
        title=title, xlabel="w1", ylabel="mean reward",
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pool.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        (out / "pool.json").write_text(pool.to_json())
        (out / "sweep.svg").write_text(svg)
    return header, rows, svg


def is_unimodal(values, se, k: float = 2.0) -> bool:
    """Rises then falls, tolerating reversals up to ``k`` standard errors."""
    values, se = np.asarray(values, float), np.asarray(se, float)
    peak = int(np.argmax(values))
    for i in range(len(values) - 1):
        tol = k * max(se[i], se[i + 1])
        step = values[i + 1] - values[i]
        if i < peak and step < -tol:
            return False
        if i >= peak and step > tol:
            return False
    return True
