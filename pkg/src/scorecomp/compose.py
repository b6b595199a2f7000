"""Composition operators over score fields.

* convex: ``sum_i w_i s_i`` with simplex weights
* cfg: ``s_u + sum_i w_i (s_i - s_u)``
* or: convex composition with softmax weights ``softmax(T log p_i + l)``
  recomputed at every ``(t, x)``
* and: convex composition whose weights equalize the rate of change of every
  member's log-density along the composed drift
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import softmax

from .oracle import FieldError, ScoreField, _as_batch

OPERATORS = ("convex", "cfg", "and", "or")
WEIGHT_TOL = 1e-12
DEGENERATE_TOL = 1e-10


class CompositionError(ValueError):
    """Composition spec violates its invariants."""


def check_simplex(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise CompositionError("need at least two weights")
    if np.any(w < 0):
        raise CompositionError(f"convex weights must be nonnegative, got {w}")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise CompositionError(f"convex weights must sum to 1, got sum {w.sum()!r}")
    return w


def _common_dim(fields):
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise CompositionError(f"members disagree in dimension: {sorted(dims)}")
    return dims.pop()


def _weighted_sum(values, weights):
    out = weights[0] * values[0]
    for w, v in zip(weights[1:], values[1:]):
        out = out + w * v
    return out


def convex_compose(fields: Sequence[ScoreField], weights, t, x, rng=None):
    w = check_simplex(weights)
    if len(fields) != w.size:
        raise CompositionError("one weight per member required")
    _common_dim(fields)
    return _weighted_sum([f.score(t, x, rng=rng) for f in fields], w)


def cfg_compose(uncond: ScoreField, conds: Sequence[ScoreField], weights, t, x, rng=None):
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if len(conds) != w.size:
        raise CompositionError("one guidance weight per conditional member required")
    _common_dim([uncond, *conds])
    s_u = uncond.score(t, x, rng=rng)
    out = s_u
    for wi, f in zip(w, conds):
        out = out + wi * (f.score(t, x, rng=rng) - s_u)
    return out


def _require_density(fields):
    for f in fields:
        if not f.has_logdensity:
            raise FieldError(f"member {f.name or f!r} has no log-density; and/or need density-capable fields")


def or_weights(fields: Sequence[ScoreField], temperature: float, offset, t, x) -> np.ndarray:
    """Softmax weights ``softmax(T log p_t(x | c_i) + l_i)``.

    ``offset`` is a scalar or one value per member. Rows of a batch get their
    own weights.
    """
    if temperature < 0:
        raise CompositionError("temperature must be >= 0")
    _require_density(fields)
    xb, single = _as_batch(x)
    logp = np.stack([np.atleast_1d(f.logdensity(t, xb)) for f in fields], axis=1)
    logits = temperature * logp + np.broadcast_to(np.asarray(offset, dtype=float), (len(fields),))
    w = softmax(logits, axis=1)
    return w[0] if single else w


def pf_drift(schedule):
    """Probability-flow drift ``(t, x, s) -> f x + h s`` of a schedule."""

    def drift(t, x, s):
        f, h = (float(c) for c in schedule.pf_drift_coeffs(t))
        return f * x + h * s

    return drift


def _project_simplex(v):
    # sort-based Euclidean projection
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


@dataclass
class AndWeights:
    weights: np.ndarray
    degenerate: np.ndarray


def and_weights(fields: Sequence[ScoreField], t, x, drift: Optional[Callable] = None) -> AndWeights:
    """Weights making ``d/dt log p_i`` along the composed drift agree across members.

    ``D_i(w) = dlogp_i/dt + <grad log p_i, u(w)>`` with ``u(w) = sum_j w_j F(t, x, s_j)``.
    Two members are solved in closed form and clamped to [0, 1]; more members
    use least squares on the pairwise equalities plus ``sum w = 1`` followed by
    simplex projection. A near-zero system falls back to uniform weights and
    sets the ``degenerate`` flag for that row.
    """
    _require_density(fields)
    if len(fields) < 2:
        raise CompositionError("and needs at least two members")
    drift = drift or pf_drift(fields[0].schedule)
    xb, single = _as_batch(x)
    m = len(fields)
    scores = [f.score(t, xb) for f in fields]
    drifts = [drift(t, xb, s) for s in scores]
    rates = [np.atleast_1d(f.dlogp_dt(t, xb)) for f in fields]
    n = xb.shape[0]
    weights = np.full((n, m), 1.0 / m)
    degenerate = np.zeros(n, dtype=bool)

    if m == 2:
        ds = scores[0] - scores[1]
        num = (rates[0] - rates[1]) + np.sum(ds * drifts[1], axis=1)
        den = np.sum(ds * (drifts[0] - drifts[1]), axis=1)
        degenerate = np.abs(den) < DEGENERATE_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            w1 = np.clip(-num / den, 0.0, 1.0)
        weights[~degenerate, 0] = w1[~degenerate]
        weights[~degenerate, 1] = 1.0 - w1[~degenerate]
    else:
        S = np.stack(scores, axis=1)  # (n, m, d)
        U = np.stack(drifts, axis=2)  # (n, d, m)
        R = np.stack(rates, axis=1)  # (n, m)
        for row in range(n):
            M = S[row] @ U[row]  # D(w) = R + M w
            lhs = np.vstack([M[1:] - M[0], np.ones((1, m))])
            rhs = np.concatenate([R[row, 0] - R[row, 1:], [1.0]])
            if np.linalg.norm(lhs[:-1]) < DEGENERATE_TOL:
                degenerate[row] = True
                continue
            sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
            weights[row] = _project_simplex(sol)
    if single:
        return AndWeights(weights[0], degenerate[0])
    return AndWeights(weights, degenerate)


@dataclass
class CompositionSpec:
    operator: str
    members: list
    weights: Optional[Sequence[float]] = None
    uncond: Optional[ScoreField] = None
    temperature: float = 1.0
    offset: object = 0.0
    drift: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise CompositionError(f"unknown operator {self.operator!r}")
        if len(self.members) < (1 if self.operator == "cfg" else 2):
            raise CompositionError("too few members")
        _common_dim(self.members)
        if self.operator == "convex":
            self.weights = check_simplex(self.weights)
            if len(self.weights) != len(self.members):
                raise CompositionError("one weight per member required")
        elif self.operator == "cfg":
            if self.uncond is None:
                raise CompositionError("cfg needs an unconditional field")
            self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        else:
            _require_density(self.members)
            if self.operator == "or" and self.temperature < 0:
                raise CompositionError("temperature must be >= 0")


def compose(spec: CompositionSpec, name: str = "composed") -> ScoreField:
    """Build the composed field described by ``spec``.

    A convex composition of members that share a native kind is computed in
    that kind (equivalent by linearity, and it avoids conversions at singular
    times); every other case composes in score space.
    """
    members = list(spec.members)
    schedule = members[0].schedule
    dim = members[0].dim
    kinds = {f.kind for f in members}

    if spec.operator == "convex":
        w = spec.weights
        kind = kinds.pop() if len(kinds) == 1 else "score"

        def fn(t, x, rng):
            return _weighted_sum([f.predict(t, x, kind, rng=rng) for f in members], w)

        return ScoreField(fn, dim, schedule, kind=kind, provenance="composed",
                          stochastic=any(f.stochastic for f in members), name=name)

    if spec.operator == "cfg":
        def fn(t, x, rng):
            return cfg_compose(spec.uncond, members, spec.weights, t, x, rng=rng)

    elif spec.operator == "or":
        def fn(t, x, rng):
            w = or_weights(members, spec.temperature, spec.offset, t, x)
            return np.einsum("nm,mnd->nd", w, np.stack([f.score(t, x, rng=rng) for f in members]))

    else:
        def fn(t, x, rng):
            w = and_weights(members, t, x, spec.drift).weights
            return np.einsum("nm,mnd->nd", w, np.stack([f.score(t, x, rng=rng) for f in members]))

    return ScoreField(fn, dim, schedule, provenance="composed",
                      stochastic=any(f.stochastic for f in members), name=name)


def convex_field(fields: Sequence[ScoreField], weights, name: str = "composed") -> ScoreField:
    return compose(CompositionSpec("convex", list(fields), weights), name=name)
