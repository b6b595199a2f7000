"""Grid search over the weight of two biased policies on a reaching task.

Each policy misses the target by a fixed shift. Symmetric shifts cancel at
w=0.5; with unequal shifts the best weight leans toward the better policy.
"""
import numpy as np

from scorecomp import GaussianMixture, NoiseSchedule
from scorecomp.bench import BenchTask, mean_shift_pair, task_evaluator
from scorecomp.search import grid_search

sched = NoiseSchedule("vp-linear")
task = BenchTask(np.zeros(2), 0.2, GaussianMixture.gaussian([0.0, 0.0], 0.01 * np.eye(2)))

for label, d1, d2 in (("symmetric", [1.2, 0], [-1.2, 0]), ("asymmetric", [0.4, 0], [-1.2, 0])):
    w_star, pool = grid_search(mean_shift_pair(task, sched, d1, d2), task_evaluator(task), 0.1, 500, seed=0)
    print(f"{label}: w* = {w_star:g}")
    for c in pool.cells:
        bar = "#" * int(round(40 * c.mean_reward))
        print(f"  w={c.w:.1f} {c.mean_reward:.3f} +- {c.se:.3f} {bar}")
