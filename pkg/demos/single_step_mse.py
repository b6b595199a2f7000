"""Mixing two noisy score estimates: analytic optimum vs Monte Carlo.

Two unbiased estimators with noise variance 1 and 4 are combined at one
(t, x). The empirical MSE curve is quadratic in the weight and its minimum
sits at the analytic optimum.
"""
import numpy as np

from scorecomp import EstimatorSpec, GaussianMixture, NoiseSchedule
from scorecomp.theory import analytic_mse, empirical_mse_curve

sched = NoiseSchedule("vp-linear")
base = GaussianMixture.gaussian(np.zeros(2))
s1 = EstimatorSpec(base, noise_cov=np.eye(2))
s2 = EstimatorSpec(base, noise_cov=4 * np.eye(2))
x = np.zeros(2)

quad = analytic_mse(s1, s2, sched, 0.5, x)
print(f"analytic: A={quad.A:.3f} B={quad.B:.3f} C={quad.C:.3f}  w*={quad.w_star:.3f}  Q(w*)={quad.q_star:.3f}")

grid = np.linspace(0, 1, 11)
curve = empirical_mse_curve(s1, s2, sched, 0.5, x, grid, 200_000, seed=0)
for w, q, se in zip(curve.w, curve.q, curve.se):
    print(f"  w={w:.1f}  Q={q:7.3f} +- {se:.3f}   analytic {quad(w):7.3f}")
print(f"best endpoint {min(curve.q[0], curve.q[-1]):.3f}, mixed {quad.q_star:.3f}")
