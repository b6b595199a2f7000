"""One prediction expressed in all four kinds, across the three schedules."""
import numpy as np

from scorecomp import GaussianMixture, NoiseSchedule, oracle_field
from scorecomp.schedule import KINDS

x = np.array([[0.3, -0.2]])
for kind in KINDS:
    sched = NoiseSchedule(kind)
    field = oracle_field(GaussianMixture.gaussian([1.0, 0.0], 0.5 * np.eye(2)), sched)
    a, s = sched.alpha_sigma(0.4)
    print(f"{kind}: alpha={float(a):.4f} sigma={float(s):.4f}")
    for target in ("score", "epsilon", "sample", "velocity"):
        print(f"   {target:>8}: {np.round(field.predict(0.4, x, target)[0], 5)}")
