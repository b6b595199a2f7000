"""Conversions between score, noise, clean-sample and velocity predictions.

All four kinds are affine images of each other at fixed ``(t, x)``; noise
prediction is used as the hub::

    score    s   = -eps / sigma
    sample   x0  = (x - sigma eps) / alpha
    velocity v   = p x0 + q eps          (p, q from the schedule)

Conversions that would divide by a vanishing ``alpha`` or ``sigma`` raise
:class:`SingularTimeError` instead of regularizing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import KINDS, FieldError, ScoreField
from .schedule import NoiseSchedule


class SingularTimeError(ZeroDivisionError):
    """Conversion requested at a time where it is undefined."""


def _col(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v[:, None]


def _coeffs(schedule, t):
    alpha, sigma = schedule.alpha_sigma(t)
    return _col(alpha), _col(sigma)


def _need(value, what, t):
    if np.any(np.asarray(value) == 0.0):
        raise SingularTimeError(f"{what} = 0 at t={t}; use the native parameterization here")


def to_epsilon(value, kind, t, x, schedule):
    alpha, sigma = _coeffs(schedule, t)
    if kind == "epsilon":
        return value
    if kind == "score":
        return -sigma * value
    if kind == "sample":
        _need(sigma, "sigma", t)
        return (x - alpha * value) / sigma
    if kind == "velocity":
        p, q = (_col(c) for c in schedule.velocity_coeffs(t))
        return (alpha * value - p * x) / (alpha * q - p * sigma)
    raise FieldError(f"unknown prediction kind {kind!r}")


def from_epsilon(eps, kind, t, x, schedule):
    alpha, sigma = _coeffs(schedule, t)
    if kind == "epsilon":
        return eps
    if kind == "score":
        _need(sigma, "sigma", t)
        return -eps / sigma
    if kind == "sample":
        _need(alpha, "alpha", t)
        return (x - sigma * eps) / alpha
    if kind == "velocity":
        _need(alpha, "alpha", t)
        p, q = (_col(c) for c in schedule.velocity_coeffs(t))
        return p * (x - sigma * eps) / alpha + q * eps
    raise FieldError(f"unknown prediction kind {kind!r}")


def convert_value(value, kind, target, t, x, schedule: NoiseSchedule):
    """Convert a raw prediction array between kinds at ``(t, x)``.

    ``t`` may also be an ``(n,)`` array paired row-wise with ``(n, d)`` inputs.
    """
    if target not in KINDS:
        raise FieldError(f"unknown prediction kind {target!r}")
    value = np.asarray(value, dtype=float)
    if kind == target:
        return value
    x = np.asarray(x, dtype=float)
    return from_epsilon(to_epsilon(value, kind, t, x, schedule), target, t, x, schedule)


@dataclass(frozen=True)
class Prediction:
    kind: str
    value: np.ndarray
    t: float
    x: np.ndarray
    schedule: NoiseSchedule


def convert(p: Prediction, target: str) -> Prediction:
    value = convert_value(p.value, p.kind, target, p.t, p.x, p.schedule)
    return Prediction(target, value, p.t, p.x, p.schedule)


def as_score_field(field: ScoreField) -> ScoreField:
    """Wrap ``field`` so that it evaluates in score kind."""
    if field.kind == "score":
        return field
    return ScoreField(
        lambda t, x, rng: field.predict(t, x, "score", rng=rng),
        field.dim,
        field.schedule,
        provenance=field.provenance,
        logdensity=field._logdensity,
        dlogp_dt=field._dlogp_dt,
        stochastic=field.stochastic,
        name=field.name,
    )


def native_field(field: ScoreField, kind: str) -> ScoreField:
    """Re-express a field so that its native output is ``kind``.

    Used to build noise- or velocity-native test fields from score oracles.
    """
    return ScoreField(
        lambda t, x, rng: field.predict(t, x, kind, rng=rng),
        field.dim,
        field.schedule,
        kind=kind,
        provenance=field.provenance,
        logdensity=field._logdensity,
        dlogp_dt=field._dlogp_dt,
        stochastic=field.stochastic,
        name=field.name,
    )
