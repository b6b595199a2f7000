"""Gaussian-mixture ground truth and the fields built on top of it.

The time-``t`` marginal of a mixture ``sum_k w_k N(mu_k, Sigma_k)`` under the
forward process is ``sum_k w_k N(alpha_t mu_k, alpha_t^2 Sigma_k + sigma_t^2 I)``,
so scores, log-densities and their time derivatives are all closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from .schedule import NoiseSchedule

LOG_2PI = np.log(2.0 * np.pi)

BIAS_KINDS = ("none", "constant", "linear", "mean-shift")
FRESHNESS = ("per-call", "frozen-per-trajectory")
KINDS = ("score", "epsilon", "sample", "velocity")


class FieldError(ValueError):
    """Invalid field construction or a capability the field does not have."""


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x, x.ndim == 1


class GaussianMixture:
    """Finite Gaussian mixture with Cholesky-factored covariances."""

    def __init__(self, weights, means, covs):
        self.weights = np.atleast_1d(np.asarray(weights, dtype=float))
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None]
        self.covs = covs
        k, d = self.means.shape
        if self.weights.shape != (k,) or self.covs.shape != (k, d, d):
            raise FieldError("weights, means and covs disagree in shape")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise FieldError("mixture weights must be positive and sum to 1")
        if not np.allclose(self.covs, np.swapaxes(self.covs, 1, 2), atol=1e-12):
            raise FieldError("covariances must be symmetric")
        try:
            self.chols = np.linalg.cholesky(self.covs)
        except np.linalg.LinAlgError as err:
            raise FieldError("covariance is not positive definite") from err
        self._cache = {}

    @classmethod
    def gaussian(cls, mean, cov=None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.eye(mean.size) if cov is None else np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(mean.size)
        return cls([1.0], mean[None], cov[None])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def shifted(self, delta) -> "GaussianMixture":
        return GaussianMixture(self.weights, self.means + np.asarray(delta, dtype=float), self.covs)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self.chols[comp], z)

    def marginal(self, schedule: NoiseSchedule, t: float):
        """Means, covariances and Cholesky factors of the time-t marginal."""
        key = (schedule, float(t))
        hit = self._cache.get(key)
        if hit is None:
            alpha, sigma = (float(v) for v in schedule.alpha_sigma(t))
            covs = alpha**2 * self.covs + sigma**2 * np.eye(self.dim)
            hit = (alpha * self.means, covs, np.linalg.cholesky(covs))
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }


def _component_terms(mix: GaussianMixture, schedule: NoiseSchedule, t: float, x: np.ndarray):
    """Per-component log-densities (n, K), residuals and whitened residuals."""
    means, _, chols = mix.marginal(schedule, t)
    n, d = x.shape
    logn = np.empty((n, mix.n_components))
    resid, white = [], []
    for k in range(mix.n_components):
        r = x - means[k]
        y = solve_triangular(chols[k], r.T, lower=True)
        logn[:, k] = (
            -0.5 * np.sum(y * y, axis=0)
            - np.sum(np.log(np.diag(chols[k])))
            - 0.5 * d * LOG_2PI
        )
        resid.append(r)
        white.append(y)
    return logn, resid, white


def _responsibilities(mix, logn):
    if mix.n_components == 1:
        return np.ones_like(logn)
    logj = logn + np.log(mix.weights)
    logj -= logj.max(axis=1, keepdims=True)
    r = np.exp(logj)
    return r / r.sum(axis=1, keepdims=True)


def oracle_score(mix: GaussianMixture, schedule: NoiseSchedule, t: float, x) -> np.ndarray:
    """Exact ``grad_x log p_t(x)`` of the mixture marginal."""
    xb, single = _as_batch(x)
    means, _, chols = mix.marginal(schedule, t)
    if mix.n_components == 1:
        out = -cho_solve((chols[0], True), (xb - means[0]).T).T
        return out[0] if single else out
    logn, _, white = _component_terms(mix, schedule, t, xb)
    resp = _responsibilities(mix, logn)
    out = np.zeros_like(xb)
    for k in range(mix.n_components):
        grad = -solve_triangular(chols[k], white[k], lower=True, trans="T").T
        out += resp[:, k : k + 1] * grad
    return out[0] if single else out


def oracle_logdensity(mix: GaussianMixture, schedule: NoiseSchedule, t: float, x):
    xb, single = _as_batch(x)
    logn, _, _ = _component_terms(mix, schedule, t, xb)
    out = logsumexp(logn + np.log(mix.weights), axis=1)
    return out[0] if single else out


def oracle_dlogp_dt(mix: GaussianMixture, schedule: NoiseSchedule, t: float, x):
    """Partial time derivative of ``log p_t(x)`` at fixed ``x``."""
    xb, single = _as_batch(x)
    means, covs, chols = mix.marginal(schedule, t)
    alpha, _ = schedule.alpha_sigma(t)
    dalpha = float(schedule.dalpha(t))
    dsig2 = float(schedule.dsigma2(t))
    logn, resid, _ = _component_terms(mix, schedule, t, xb)
    resp = _responsibilities(mix, logn)
    out = np.zeros(xb.shape[0])
    for k in range(mix.n_components):
        dS = 2.0 * float(alpha) * dalpha * mix.covs[k] + dsig2 * np.eye(mix.dim)
        u = cho_solve((chols[k], True), resid[k].T)  # S^{-1} r, (d, n)
        quad = 0.5 * np.sum(u * (dS @ u), axis=0)
        trace = 0.5 * np.trace(cho_solve((chols[k], True), dS))
        drift = dalpha * (mix.means[k] @ u)
        out += resp[:, k] * (quad - trace + drift)
    return out[0] if single else out


def score_lipschitz(mix: GaussianMixture, schedule: NoiseSchedule, t: float) -> float:
    """Spectral norm of the (constant) score Jacobian of a single Gaussian."""
    if mix.n_components != 1:
        raise FieldError("closed-form Lipschitz constant needs a single Gaussian")
    _, covs, _ = mix.marginal(schedule, t)
    return float(1.0 / np.linalg.eigvalsh(covs[0])[0])


class ScoreField:
    """Evaluatable field ``(t, x) -> prediction`` in a native parameterization.

    ``x`` may be a single ``(d,)`` point or an ``(n, d)`` batch; rows of a batch
    are treated as independent trajectories. ``predict`` converts the native
    output to any other kind.
    """

    def __init__(
        self,
        fn: Callable,
        dim: int,
        schedule: NoiseSchedule,
        *,
        kind: str = "score",
        provenance: str = "oracle",
        logdensity: Optional[Callable] = None,
        dlogp_dt: Optional[Callable] = None,
        stochastic: bool = False,
        name: str = "",
    ):
        if kind not in KINDS:
            raise FieldError(f"unknown prediction kind {kind!r}")
        self._fn = fn
        self.dim = int(dim)
        self.schedule = schedule
        self.kind = kind
        self.provenance = provenance
        self._logdensity = logdensity
        self._dlogp_dt = dlogp_dt
        self.stochastic = stochastic
        self.name = name

    @property
    def has_logdensity(self) -> bool:
        return self._logdensity is not None

    @property
    def has_time_derivative(self) -> bool:
        return self._dlogp_dt is not None

    def __call__(self, t, x, rng=None):
        xb, single = _as_batch(x)
        if xb.shape[1] != self.dim:
            raise FieldError(f"field has dimension {self.dim}, got input of width {xb.shape[1]}")
        out = self._fn(float(t), xb, rng)
        return out[0] if single else out

    def predict(self, t, x, kind: str = "score", rng=None):
        from .param import convert_value

        out = self(t, x, rng=rng)
        if kind == self.kind:
            return out
        return convert_value(out, self.kind, kind, t, np.asarray(x, dtype=float), self.schedule)

    def score(self, t, x, rng=None):
        return self.predict(t, x, "score", rng=rng)

    def logdensity(self, t, x):
        if self._logdensity is None:
            raise FieldError(f"field {self.name or self.provenance!r} has no log-density")
        return self._logdensity(float(t), x)

    def dlogp_dt(self, t, x, h: float = 1e-5):
        """Partial time derivative of the log-density, analytic when available."""
        if self._dlogp_dt is not None:
            return self._dlogp_dt(float(t), x)
        if self._logdensity is None:
            raise FieldError("field has neither a log-density nor its time derivative")
        lo, hi = max(t - h, 0.0), min(t + h, 1.0)
        return (self.logdensity(hi, x) - self.logdensity(lo, x)) / (hi - lo)

    def __repr__(self):
        return f"ScoreField(name={self.name!r}, kind={self.kind}, provenance={self.provenance}, dim={self.dim})"


def oracle_field(mix: GaussianMixture, schedule: NoiseSchedule, name: str = "oracle") -> ScoreField:
    return ScoreField(
        lambda t, x, rng: oracle_score(mix, schedule, t, x),
        mix.dim,
        schedule,
        provenance="oracle",
        logdensity=lambda t, x: oracle_logdensity(mix, schedule, t, x),
        dlogp_dt=lambda t, x: oracle_dlogp_dt(mix, schedule, t, x),
        name=name,
    )


@dataclass
class EstimatorSpec:
    """Error model ``s_hat = s* + b(t, x) + eta`` around a mixture oracle.

    ``bias_value`` is a vector for ``constant`` and ``mean-shift`` biases and a
    ``d x d`` matrix for ``linear`` (``b(t, x) = G x``). ``noise_cov`` of None
    means a noiseless estimator.
    """

    base: GaussianMixture
    bias: str = "none"
    bias_value: Optional[np.ndarray] = None
    noise_cov: Optional[np.ndarray] = None
    freshness: str = "per-call"
    name: str = ""
    _noise_chol: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        d = self.base.dim
        if self.bias not in BIAS_KINDS:
            raise FieldError(f"unknown bias kind {self.bias!r}")
        if self.freshness not in FRESHNESS:
            raise FieldError(f"unknown noise freshness {self.freshness!r}")
        if self.bias == "none":
            self.bias_value = None
        else:
            value = np.asarray(self.bias_value, dtype=float)
            want = (d, d) if self.bias == "linear" else (d,)
            if value.shape != want:
                raise FieldError(f"{self.bias} bias needs shape {want}, got {value.shape}")
            self.bias_value = value
        if self.noise_cov is not None:
            cov = np.asarray(self.noise_cov, dtype=float)
            if cov.ndim == 0:
                cov = float(cov) * np.eye(d)
            if cov.shape != (d, d) or not np.allclose(cov, cov.T, atol=1e-12):
                raise FieldError("noise covariance must be a symmetric d x d matrix")
            try:
                self._noise_chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as err:
                raise FieldError("noise covariance is not positive definite") from err
            self.noise_cov = cov

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def noise_chol(self):
        return self._noise_chol

    @property
    def has_noise(self) -> bool:
        return self.noise_cov is not None

    def bias_at(self, schedule: NoiseSchedule, t: float, x) -> np.ndarray:
        """Deterministic part of the error, ``E[s_hat] - s*``."""
        xb, single = _as_batch(x)
        if self.bias == "none":
            out = np.zeros_like(xb)
        elif self.bias == "constant":
            out = np.broadcast_to(self.bias_value, xb.shape).copy()
        elif self.bias == "linear":
            out = xb @ self.bias_value.T
        else:
            shifted = self.base.shifted(self.bias_value)
            out = oracle_score(shifted, schedule, t, xb) - oracle_score(self.base, schedule, t, xb)
        return out[0] if single else out

    def to_dict(self) -> dict:
        out = {"name": self.name, "bias": self.bias, "freshness": self.freshness}
        if self.bias_value is not None:
            out["bias_value"] = self.bias_value.tolist()
        if self.noise_cov is not None:
            out["noise_cov"] = self.noise_cov.tolist()
        return out


def frozen_normals(seed: int, t: float, shape) -> np.ndarray:
    """Counter-based normals keyed by ``(seed, t)``; row i belongs to trajectory i.

    Paired runs on a shared grid and batch size therefore see identical noise.
    """
    tbits = int(np.float64(t).view(np.uint64))
    key = np.array([np.uint64(seed % 2**64), np.uint64(tbits)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(shape)


def make_estimator(spec: EstimatorSpec, schedule: NoiseSchedule, seed: int = 0) -> ScoreField:
    """Realize the error model as a field.

    Per-call noise draws from the ``rng`` passed at evaluation time, falling
    back to a generator owned by the field and seeded with ``seed``.
    """
    base = spec.base
    own_rng = np.random.default_rng(seed)
    truth = base.shifted(spec.bias_value) if spec.bias == "mean-shift" else base

    def fn(t, x, rng):
        if spec.bias == "mean-shift":
            out = oracle_score(truth, schedule, t, x)
        else:
            out = oracle_score(base, schedule, t, x)
            if spec.bias != "none":
                out = out + spec.bias_at(schedule, t, x)
        if spec.has_noise:
            if spec.freshness == "per-call":
                z = (rng if rng is not None else own_rng).standard_normal(x.shape)
            else:
                z = frozen_normals(seed, t, x.shape)
            out = out + z @ spec.noise_chol.T
        return out

    exact_law = spec.bias in ("none", "mean-shift") and not spec.has_noise
    return ScoreField(
        fn,
        base.dim,
        schedule,
        provenance="oracle" if spec.bias == "none" and not spec.has_noise else "perturbed",
        logdensity=(lambda t, x: oracle_logdensity(truth, schedule, t, x)) if exact_law else None,
        dlogp_dt=(lambda t, x: oracle_dlogp_dt(truth, schedule, t, x)) if exact_law else None,
        stochastic=spec.has_noise,
        name=spec.name,
    )
