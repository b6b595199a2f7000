"""Forward-process coefficients and per-step solver coefficients.

Time runs over ``[0, 1]`` with ``t = 0`` the data end and ``t = 1`` the noise
end. The forward marginal is ``x_t = alpha(t) x_0 + sigma(t) eps``.

Every built-in solver is a single update of the form::

    x_next = a * x + b * score(t, x) + c * z,    z ~ N(0, sigma_step^2 I)

so composed, converted and oracle fields all drive the same loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("vp-linear", "vp-scaled-linear", "flow-linear")
SOLVERS = ("ddpm", "ddim", "pf-ode-euler", "flow-euler")


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or out-of-range times."""


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str = "vp-linear"
    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if self.is_vp and not (0.0 <= self.beta_min <= self.beta_max):
            raise ScheduleError("need 0 <= beta_min <= beta_max")

    @property
    def is_vp(self) -> bool:
        return self.kind.startswith("vp")

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > 1.0) or np.any(np.isnan(t)):
            raise ScheduleError(f"time outside [0, 1]: {t}")
        return t

    def beta(self, t):
        """Instantaneous noise rate of the VP process."""
        t = self._check(t)
        if self.kind == "vp-linear":
            return self.beta_min + t * (self.beta_max - self.beta_min)
        if self.kind == "vp-scaled-linear":
            r0, r1 = np.sqrt(self.beta_min), np.sqrt(self.beta_max)
            return (r0 + t * (r1 - r0)) ** 2
        raise ScheduleError("beta(t) is only defined for vp schedules")

    def integrated_beta(self, t):
        """Closed-form ``int_0^t beta(s) ds``."""
        t = self._check(t)
        if self.kind == "vp-linear":
            return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t**2
        if self.kind == "vp-scaled-linear":
            r0, r1 = np.sqrt(self.beta_min), np.sqrt(self.beta_max)
            k = r1 - r0
            if k == 0.0:
                return self.beta_min * t
            return ((r0 + k * t) ** 3 - r0**3) / (3.0 * k)
        raise ScheduleError("integrated beta is only defined for vp schedules")

    def alpha_sigma(self, t):
        t = self._check(t)
        if self.kind == "flow-linear":
            return 1.0 - t, t
        alpha = np.exp(-0.5 * self.integrated_beta(t))
        # -expm1 keeps sigma accurate near t = 0
        sigma = np.sqrt(-np.expm1(-self.integrated_beta(t)))
        return alpha, sigma

    def dalpha(self, t):
        """Time derivative of alpha."""
        if self.kind == "flow-linear":
            return -np.ones_like(self._check(t))
        alpha, _ = self.alpha_sigma(t)
        return -0.5 * self.beta(t) * alpha

    def dsigma2(self, t):
        """Time derivative of sigma^2 (finite at t = 0, unlike d sigma / dt)."""
        if self.kind == "flow-linear":
            return 2.0 * self._check(t)
        alpha, _ = self.alpha_sigma(t)
        return self.beta(t) * alpha**2

    def velocity_coeffs(self, t):
        """Coefficients ``(p, q)`` of the velocity target ``v = p x_0 + q eps``.

        VP schedules use ``v = alpha eps - sigma x_0``; the linear flow uses
        its path derivative ``v = eps - x_0``.
        """
        if self.kind == "flow-linear":
            t = self._check(t)
            return -np.ones_like(t), np.ones_like(t)
        alpha, sigma = self.alpha_sigma(t)
        return -sigma, alpha

    def pf_drift_coeffs(self, t):
        """``(f, h)`` with probability-flow drift ``dx/dt = f x + h s``."""
        if self.is_vp:
            b = self.beta(t)
            return -0.5 * b, -0.5 * b
        alpha, sigma = self.alpha_sigma(t)
        if np.any(alpha == 0.0):
            raise ScheduleError("probability-flow drift of flow-linear is singular at t = 1")
        f = self.dalpha(t) / alpha
        g2 = self.dsigma2(t) - 2.0 * f * sigma**2
        return f, -0.5 * g2

    def to_dict(self) -> dict:
        if self.is_vp:
            return {"kind": self.kind, "beta_min": self.beta_min, "beta_max": self.beta_max}
        return {"kind": self.kind}


def alpha_sigma(schedule: NoiseSchedule, t):
    return schedule.alpha_sigma(t)


@dataclass(frozen=True)
class StepCoefficients:
    """Coefficients of one update ``a x + b s + c z`` with ``z ~ N(0, sigma_step^2 I)``."""

    a: float
    b: float
    c: float
    sigma_step: float

    @property
    def deterministic(self) -> bool:
        return self.c == 0.0 or self.sigma_step == 0.0

    def apply(self, x, score, z=None):
        out = self.a * x + self.b * score
        if not self.deterministic:
            out = out + self.c * self.sigma_step * z
        return out


def step_coefficients(schedule: NoiseSchedule, solver: str, t_from: float, t_to: float) -> StepCoefficients:
    """Solver coefficients for one step from ``t_from`` down to ``t_to``.

    A zero-length step returns the identity. ``t_to > t_from`` is rejected.
    """
    if solver not in SOLVERS:
        raise ScheduleError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    t_from, t_to = float(t_from), float(t_to)
    schedule._check([t_from, t_to])
    if t_to > t_from:
        raise ScheduleError(f"steps run backwards in time: t_to={t_to} > t_from={t_from}")
    if t_to == t_from:
        return StepCoefficients(1.0, 0.0, 0.0, 0.0)

    a_t, s_t = (float(v) for v in schedule.alpha_sigma(t_from))
    a_s, s_s = (float(v) for v in schedule.alpha_sigma(t_to))
    dt = t_to - t_from

    if solver == "pf-ode-euler":
        f, h = (float(v) for v in schedule.pf_drift_coeffs(t_from))
        return StepCoefficients(1.0 + dt * f, dt * h, 0.0, 0.0)

    if a_t == 0.0:
        raise ScheduleError(f"{solver} step needs alpha(t_from) > 0 (t_from={t_from})")

    if solver == "ddim":
        # x0_hat = (x + s_t^2 s) / a_t, eps_hat = -s_t s
        return StepCoefficients(a_s / a_t, s_t * (a_s * s_t / a_t - s_s), 0.0, 0.0)

    if solver == "flow-euler":
        p, q = (float(v) for v in schedule.velocity_coeffs(t_from))
        return StepCoefficients(1.0 + dt * p / a_t, dt * (p * s_t**2 / a_t - q * s_t), 0.0, 0.0)

    # ddpm ancestral step through the Gaussian posterior q(x_s | x_t, x0_hat)
    a_ts = a_t / a_s
    var_ts = s_t**2 - a_ts**2 * s_s**2
    std = np.sqrt(max(var_ts, 0.0) * s_s**2) / s_t
    return StepCoefficients(1.0 / a_ts, var_ts / a_ts, 1.0, float(std))


def time_grid(n_steps: int, t_max: float = 1.0, t_min: float = 0.0) -> np.ndarray:
    """Uniform descending grid with ``n_steps + 1`` nodes."""
    if n_steps < 1:
        raise ScheduleError("n_steps must be >= 1")
    if not 0.0 <= t_min < t_max <= 1.0:
        raise ScheduleError("need 0 <= t_min < t_max <= 1")
    grid = np.linspace(t_max, t_min, n_steps + 1)
    grid[0], grid[-1] = t_max, t_min
    return grid
