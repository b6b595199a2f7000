"""Numerical certificates for convex score composition.

Three results are checked here:

* the mean-squared error ``Q(w) = E||w e1 + (1-w) e2||^2`` of a convex
  combination of two estimators is the quadratic ``A w^2 + B w + C`` with
  closed-form coefficients, minimized at ``w* = -B / (2A)``;
* the Grönwall bounds transferring a score error into a terminal trajectory
  error along a reverse ODE, both pathwise and in expectation;
* the transfer of a smaller integrated score error into a smaller certified
  terminal bound for the composed estimator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .compose import convex_field
from .oracle import EstimatorSpec, FieldError, GaussianMixture, make_estimator, oracle_field
from .sampler import OdeDynamics, simulate_pair, time_grid
from .schedule import NoiseSchedule


class NoUniformBound(ValueError):
    """The estimator does not admit a computable uniform score-error bound."""


# ---------------------------------------------------------------------------
# single-step quadratic


@dataclass
class MSEQuadratic:
    A: float
    B: float
    C: float
    w_star: float
    q_star: float
    g0: float
    g1: float
    aligned: bool
    moments: dict = field(default_factory=dict)
    mc_moments: dict = field(default_factory=dict)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self.A * w**2 + self.B * w + self.C

    @property
    def w_star_convex(self) -> float:
        """Minimizer restricted to ``[0, 1]``."""
        return float(np.clip(self.w_star, 0.0, 1.0))

    @property
    def interior(self) -> bool:
        return 0.0 < self.w_star < 1.0


def quadratic_coefficients(b1, b2, m1, m2, m12):
    """``(A, B, C)`` from biases and noise moments ``E|eta1|^2, E|eta2|^2, E<eta1, eta2>``."""
    b1, b2 = np.asarray(b1, float), np.asarray(b2, float)
    db = b1 - b2
    A = float(db @ db) + m1 + m2 - 2.0 * m12
    B = 2.0 * float(b2 @ db) - 2.0 * m2 + 2.0 * m12
    C = float(b2 @ b2) + m2
    return A, B, C


def _quadratic(A, B, C, tol, moments, mc=None):
    if A > tol:
        w_star = -B / (2.0 * A)
        g0 = B**2 / (4.0 * A)
        g1 = (2.0 * A + B) ** 2 / (4.0 * A)
        aligned = False
    else:
        # perfectly aligned errors: Q is constant (up to tol), any w is optimal
        w_star, g0, g1, aligned = 0.0, 0.0, 0.0, True
    q_star = C - g0 if not aligned else C
    return MSEQuadratic(A, B, C, float(w_star), float(q_star), float(g0), float(g1), aligned,
                        moments, mc or {})


def noise_moments(spec1: EstimatorSpec, spec2: EstimatorSpec, correlation: float = 0.0):
    """Exact second moments under the coupling ``z2 = rho z1 + sqrt(1 - rho^2) z'``."""
    m1 = float(np.trace(spec1.noise_cov)) if spec1.has_noise else 0.0
    m2 = float(np.trace(spec2.noise_cov)) if spec2.has_noise else 0.0
    if spec1.has_noise and spec2.has_noise:
        m12 = correlation * float(np.trace(spec1.noise_chol @ spec2.noise_chol.T))
    else:
        m12 = 0.0
    return m1, m2, m12


def draw_errors(spec1, spec2, schedule, t, x, n, rng, correlation=0.0):
    """``n`` joint draws of the errors ``e_i = b_i(t, x) + eta_i``."""
    if not -1.0 <= correlation <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    d = spec1.dim
    b1 = spec1.bias_at(schedule, t, x)
    b2 = spec2.bias_at(schedule, t, x)
    z1 = rng.standard_normal((n, d))
    z2 = correlation * z1 + np.sqrt(1.0 - correlation**2) * rng.standard_normal((n, d))
    e1 = b1 + (z1 @ spec1.noise_chol.T if spec1.has_noise else 0.0)
    e2 = b2 + (z2 @ spec2.noise_chol.T if spec2.has_noise else 0.0)
    return np.broadcast_to(e1, (n, d)), np.broadcast_to(e2, (n, d))


def analytic_mse(
    spec1: EstimatorSpec,
    spec2: EstimatorSpec,
    schedule: NoiseSchedule,
    t: float,
    x,
    *,
    correlation: float = 0.0,
    n_mc: int = 0,
    seed: int = 0,
    tol: float = 1e-12,
) -> MSEQuadratic:
    """Closed-form quadratic certificate at a fixed ``(t, x)``.

    With ``n_mc > 0`` the noise moments are also estimated by Monte Carlo and
    stored in ``mc_moments`` as a cross-check.
    """
    if spec1.dim != spec2.dim:
        raise FieldError("estimators disagree in dimension")
    x = np.asarray(x, dtype=float)
    b1 = spec1.bias_at(schedule, t, x)
    b2 = spec2.bias_at(schedule, t, x)
    m1, m2, m12 = noise_moments(spec1, spec2, correlation)
    A, B, C = quadratic_coefficients(b1, b2, m1, m2, m12)
    mc = {}
    if n_mc:
        e1, e2 = draw_errors(spec1, spec2, schedule, t, x, n_mc, np.random.default_rng(seed), correlation)
        n1, n2 = e1 - b1, e2 - b2
        mc = {
            "m1": float(np.mean(np.sum(n1 * n1, axis=1))),
            "m2": float(np.mean(np.sum(n2 * n2, axis=1))),
            "m12": float(np.mean(np.sum(n1 * n2, axis=1))),
        }
    return _quadratic(A, B, C, tol, {"m1": m1, "m2": m2, "m12": m12}, mc)


@dataclass
class MSECurve:
    """Monte-Carlo estimate of ``Q(w)`` on a weight grid.

    Every draw contributes ``q(w) = c(w) . (|e1|^2, |e2|^2, <e1, e2>)`` with
    ``c(w) = (w^2, (1-w)^2, 2w(1-w))``; standard errors come from the sample
    covariance of that 3-vector.
    """

    w: np.ndarray
    q: np.ndarray
    se: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @staticmethod
    def _c(w):
        w = np.asarray(w, dtype=float)
        return np.stack([w**2, (1 - w) ** 2, 2 * w * (1 - w)], axis=-1)

    def value(self, w):
        return self._c(w) @ self.mean

    def diff_se(self, w_a, w_b):
        """Standard error of ``Q(w_a) - Q(w_b)`` (paired draws)."""
        c = self._c(w_a) - self._c(w_b)
        return float(np.sqrt(max(c @ self.cov @ c, 0.0) / self.n))

    def argmin(self) -> float:
        return float(self.w[np.argmin(self.q)])

    def fit(self):
        """Least-squares quadratic fit; returns ``(A, B, C, r2)``."""
        V = np.vander(self.w, 3)
        coef, *_ = np.linalg.lstsq(V, self.q, rcond=None)
        resid = self.q - V @ coef
        ss_tot = np.sum((self.q - self.q.mean()) ** 2)
        r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
        return float(coef[0]), float(coef[1]), float(coef[2]), float(r2)


def empirical_mse_curve(
    spec1: EstimatorSpec,
    spec2: EstimatorSpec,
    schedule: NoiseSchedule,
    t: float,
    x,
    w_grid,
    n_mc: int,
    seed: int = 0,
    *,
    correlation: float = 0.0,
    chunk: int = 250_000,
) -> MSECurve:
    w = np.asarray(w_grid, dtype=float)
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weight grid must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    total = np.zeros(3)
    outer = np.zeros((3, 3))
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        e1, e2 = draw_errors(spec1, spec2, schedule, t, x, m, rng, correlation)
        stats = np.stack(
            [np.sum(e1 * e1, axis=1), np.sum(e2 * e2, axis=1), np.sum(e1 * e2, axis=1)], axis=1
        )
        total += stats.sum(axis=0)
        outer += stats.T @ stats
        done += m
    mean = total / n_mc
    cov = (outer - n_mc * np.outer(mean, mean)) / max(n_mc - 1, 1)
    c = MSECurve._c(w)
    q = c @ mean
    se = np.sqrt(np.maximum(np.einsum("wi,ij,wj->w", c, cov, c), 0.0) / n_mc)
    return MSECurve(w, q, se, mean, cov, n_mc)


# ---------------------------------------------------------------------------
# Grönwall bounds


def _tau(grid):
    """Forward integration variable (time-to-go) for a descending grid."""
    return grid[0] - np.asarray(grid, dtype=float)


def growth_factor(tau, l_tilde):
    """``exp(int_tau^T L~)`` at each node."""
    a = cumulative_trapezoid(l_tilde, tau, initial=0.0)
    return np.exp(a[-1] - a)


def expected_bound(tau, l_tilde, l_s, kappa) -> float:
    """``(int e^{2 int_t^T L~} L_s^2 dt)^{1/2} (int kappa^2 dt)^{1/2}`` by trapezoid rule."""
    tau = np.asarray(tau, dtype=float)
    l_tilde, l_s, kappa = (np.broadcast_to(np.asarray(v, float), tau.shape) for v in (l_tilde, l_s, kappa))
    weight = growth_factor(tau, l_tilde) ** 2 * l_s**2
    return float(np.sqrt(trapezoid(weight, tau)) * np.sqrt(trapezoid(kappa**2, tau)))


def pathwise_bound(tau, l_tilde, l_s, delta_norm):
    """``int e^{int_t^T L~} L_s |Delta_s(t, x*(t))| dt`` for each path (rows of ``delta_norm``)."""
    tau = np.asarray(tau, dtype=float)
    w = growth_factor(tau, np.broadcast_to(l_tilde, tau.shape)) * np.broadcast_to(l_s, tau.shape)
    return trapezoid(np.atleast_2d(delta_norm) * w, tau, axis=-1)


def affine_bias(spec: EstimatorSpec, schedule: NoiseSchedule, t: float):
    """``(J, c)`` with ``b(t, x) = J x + c`` for a single-Gaussian base."""
    d = spec.dim
    if spec.bias == "none":
        return np.zeros((d, d)), np.zeros(d)
    if spec.bias == "constant":
        return np.zeros((d, d)), spec.bias_value.copy()
    if spec.bias == "linear":
        return spec.bias_value.copy(), np.zeros(d)
    if spec.base.n_components != 1:
        raise NoUniformBound("mean-shift bias is affine only on a single-Gaussian base")
    alpha = float(schedule.alpha_sigma(t)[0])
    _, covs, _ = spec.base.marginal(schedule, t)
    return np.zeros((d, d)), alpha * np.linalg.solve(covs[0], spec.bias_value)


def _check_certifiable(spec: EstimatorSpec):
    if spec.has_noise:
        raise NoUniformBound("stochastic estimator: no uniform bound on the score error")
    if spec.base.n_components != 1:
        raise NoUniformBound("certificates need a single-Gaussian base (closed-form Lipschitz constant)")


def _lipschitz_hat(base: GaussianMixture, schedule, t, J):
    _, covs, _ = base.marginal(schedule, t)
    jac = -np.linalg.inv(covs[0]) + J
    return float(np.linalg.norm(jac, 2))


@dataclass
class GronwallCertificate:
    grid: np.ndarray
    L_x: np.ndarray
    L_s: np.ndarray
    lam_hat: np.ndarray
    kappa: np.ndarray
    L_tilde: np.ndarray
    pathwise: np.ndarray
    expected: float
    measured: np.ndarray
    kappa_source: str = "uniform"

    @property
    def slack(self) -> np.ndarray:
        return self.pathwise - self.measured

    @property
    def all_within_pathwise(self) -> bool:
        return bool(np.all(self.measured <= self.pathwise))

    @property
    def expected_covers_mean(self) -> bool:
        return bool(self.expected >= self.measured.mean())

    def summary(self) -> dict:
        return {
            "n_pairs": int(self.measured.size),
            "n_steps": int(self.grid.size - 1),
            "expected_bound": self.expected,
            "pathwise_mean": float(self.pathwise.mean()),
            "measured_mean": float(self.measured.mean()),
            "measured_max": float(self.measured.max()),
            "min_slack": float(self.slack.min()),
            "fraction_within_pathwise": float(np.mean(self.measured <= self.pathwise)),
            "kappa_source": self.kappa_source,
        }


def certificate_inputs(base, J_c_of_t, dynamics: OdeDynamics, grid, oracle_states=None):
    """``L_x, L_s, Lambda_hat, kappa`` on ``grid`` for an affine bias ``t -> (J, c)``."""
    sched = dynamics.schedule
    L_x = np.array([float(dynamics.lipschitz_x(t)) for t in grid])
    L_s = np.array([float(dynamics.lipschitz_s(t)) for t in grid])
    lam, kap = np.empty(len(grid)), np.empty(len(grid))
    source = "uniform"
    for i, t in enumerate(grid):
        J, c = J_c_of_t(t)
        lam[i] = _lipschitz_hat(base, sched, t, J)
        if np.any(J):
            if oracle_states is None:
                raise NoUniformBound("x-dependent bias is unbounded; pass oracle states for a tube bound")
            kap[i] = np.max(np.linalg.norm(oracle_states[i] @ J.T + c, axis=1))
            source = "tube"
        else:
            kap[i] = np.linalg.norm(c)
    return L_x, L_s, lam, kap, source


def gronwall_certificate(
    mix: GaussianMixture,
    spec: EstimatorSpec,
    dynamics: OdeDynamics,
    n_steps: int,
    n_pairs: int,
    seed: int = 0,
) -> GronwallCertificate:
    """Simulate ``n_pairs`` oracle/estimator pairs and evaluate both bounds.

    ``kappa(t)`` is the sup-norm of the bias; for a linear bias it is the sup
    over the tube visited by the simulated oracle paths.
    """
    _check_certifiable(spec)
    sched = dynamics.schedule
    oracle = oracle_field(mix, sched)
    est = make_estimator(spec, sched, seed)
    pair = simulate_pair(oracle, est, dynamics, n_steps, seed, n_pairs=n_pairs)
    grid = pair.star.grid
    states = pair.star.states
    L_x, L_s, lam, kap, source = certificate_inputs(
        mix, lambda t: affine_bias(spec, sched, t), dynamics, grid, states
    )
    L_tilde = L_x + L_s * lam
    tau = _tau(grid)
    delta = np.stack(
        [np.linalg.norm(est.score(t, states[i]) - oracle.score(t, states[i]), axis=1) for i, t in enumerate(grid)],
        axis=1,
    )
    return GronwallCertificate(
        grid=grid,
        L_x=L_x,
        L_s=L_s,
        lam_hat=lam,
        kappa=kap,
        L_tilde=L_tilde,
        pathwise=pathwise_bound(tau, L_tilde, L_s, delta),
        expected=expected_bound(tau, L_tilde, L_s, kap),
        measured=pair.errors,
        kappa_source=source,
    )


# ---------------------------------------------------------------------------
# bound transfer


@dataclass
class TransferRow:
    w: float
    integrated_mse: float
    bound: float
    measured_mean: float
    premise: bool
    bound_below_parents: bool


@dataclass
class TransferReport:
    rows: list
    parent_mse: tuple
    parent_bound: tuple
    parent_measured: tuple

    @property
    def transfer_holds(self) -> bool:
        """Every strict-premise weight certifies a bound below both parents."""
        return all(r.bound_below_parents for r in self.rows if r.premise)

    def best_measured_w(self) -> float:
        errs = np.array([r.measured_mean for r in self.rows])
        return float(self.rows[int(np.argmin(errs))].w)

    def to_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "parent_mse": list(self.parent_mse),
            "parent_bound": list(self.parent_bound),
            "parent_measured": list(self.parent_measured),
            "transfer_holds": self.transfer_holds,
        }


def transfer_check(
    spec1: EstimatorSpec,
    spec2: EstimatorSpec,
    w_grid,
    dynamics: OdeDynamics,
    n_steps: int = 200,
    n_pairs: int = 100,
    seed: int = 0,
) -> TransferReport:
    """Integrated score MSE, certified bound and measured error for each weight.

    The certified bound is the expected-error form with ``int E|Delta|^2``
    along the oracle paths; for x-independent biases this equals the
    ``kappa`` form. Weight ``w`` multiplies ``spec1``; ``w = 1`` and ``w = 0``
    reproduce the parents.
    """
    for s in (spec1, spec2):
        _check_certifiable(s)
    if spec1.base is not spec2.base and not (
        np.array_equal(spec1.base.means, spec2.base.means) and np.array_equal(spec1.base.covs, spec2.base.covs)
    ):
        raise FieldError("estimators must share the base law")
    base = spec1.base
    sched = dynamics.schedule
    oracle = oracle_field(base, sched)
    f1, f2 = make_estimator(spec1, sched, seed), make_estimator(spec2, sched, seed)
    grid = time_grid(n_steps)
    tau = _tau(grid)

    def evaluate(field_, jc):
        pair = simulate_pair(oracle, field_, dynamics, n_steps, seed, n_pairs=n_pairs)
        states = pair.star.states
        msq = np.array(
            [np.mean(np.sum((field_.score(t, states[i]) - oracle.score(t, states[i])) ** 2, axis=1))
             for i, t in enumerate(grid)]
        )
        L_x, L_s, lam, _, _ = certificate_inputs(base, jc, dynamics, grid, states)
        integ = float(trapezoid(msq, tau))
        bound = expected_bound(tau, L_x + L_s * lam, L_s, np.sqrt(msq))
        return integ, bound, float(pair.errors.mean())

    def jc_mix(w):
        def jc(t):
            J1, c1 = affine_bias(spec1, sched, t)
            J2, c2 = affine_bias(spec2, sched, t)
            return w * J1 + (1 - w) * J2, w * c1 + (1 - w) * c2
        return jc

    p1 = evaluate(f1, jc_mix(1.0))
    p2 = evaluate(f2, jc_mix(0.0))
    rows = []
    for w in np.asarray(w_grid, dtype=float):
        integ, bound, meas = evaluate(convex_field([f1, f2], [w, 1.0 - w]), jc_mix(w))
        premise = integ < min(p1[0], p2[0])
        rows.append(TransferRow(float(w), integ, bound, meas, premise, bound < min(p1[1], p2[1])))
    return TransferReport(rows, (p1[0], p2[0]), (p1[1], p2[1]), (p1[2], p2[2]))
