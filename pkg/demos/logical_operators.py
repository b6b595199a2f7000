"""OR and AND composition of two Gaussians, sampled with DDIM.

OR follows the density of the mixture and keeps both modes. AND steers toward
the region where both members are likely, which for separated modes is the
midpoint.
"""
import numpy as np

from scorecomp import CompositionSpec, GaussianMixture, NoiseSchedule, compose, oracle_field, sample

sched = NoiseSchedule("vp-linear")
a = oracle_field(GaussianMixture.gaussian([-1.5, 0.0], 0.05 * np.eye(2)), sched, name="left")
b = oracle_field(GaussianMixture.gaussian([1.5, 0.0], 0.05 * np.eye(2)), sched, name="right")

for op in ("or", "and"):
    field = compose(CompositionSpec(op, [a, b]))
    x = sample(field, sched, "ddim", 200, 4000, seed=0, record="ends").terminal
    left = np.mean(x[:, 0] < -0.75)
    right = np.mean(x[:, 0] > 0.75)
    print(f"{op:>3}: mean x={x[:, 0].mean():+.3f}  left {left:.2f}  middle {1 - left - right:.2f}  right {right:.2f}")
