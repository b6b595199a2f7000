"""Verification suites behind ``scorecomp verify``.

Each suite returns a list of :class:`Check` records (name, value, tolerance,
pass flag) that the CLI prints and serializes.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .config import ExperimentConfig
from .oracle import KINDS, EstimatorSpec, GaussianMixture
from .param import convert_value
from .sampler import OdeDynamics
from .schedule import NoiseSchedule
from .theory import analytic_mse, transfer_check, empirical_mse_curve, expected_bound, gronwall_certificate

SUITES = ("mse", "gronwall", "transfer", "conversions")


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: value={self.value:.6g} tol={self.tolerance:.3g} {self.detail}".rstrip()

    def to_dict(self):
        out = asdict(self)
        out["value"] = float(self.value)
        out["passed"] = bool(self.passed)
        return out


def conversion_errors(schedule: NoiseSchedule, n: int, seed: int, d: int = 3):
    """Max round-trip error over all directed kind pairs, and the
    disagreement between score-space and noise-space convex composition.

    The composition disagreement is returned both as a max abs error and
    scaled by ``max(1, |score|)``: near ``sigma -> 0`` sample-kind inputs map to
    scores of order ``1/sigma**2`` and the two summation orders then differ by
    a few ulp of that magnitude.
    """
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.02, 0.98, n)
    xs = rng.standard_normal((n, d))
    vals = rng.standard_normal((n, d))
    worst = {}
    for a in KINDS:
        for b in KINDS:
            if a != b:
                back = convert_value(convert_value(vals, a, b, ts, xs, schedule), b, a, ts, xs, schedule)
                worst[(a, b)] = float(np.max(np.abs(back - vals)))
    # composition order: combine in score space vs in epsilon space
    w = rng.dirichlet(np.ones(3), size=n)
    order = order_abs = 0.0
    for kinds in itertools.product(KINDS, repeat=3):
        preds = rng.standard_normal((3, n, d))
        scores = [convert_value(p, k, "score", ts, xs, schedule) for p, k in zip(preds, kinds)]
        epss = [convert_value(p, k, "epsilon", ts, xs, schedule) for p, k in zip(preds, kinds)]
        via_score = sum(w[:, j : j + 1] * s for j, s in enumerate(scores))
        via_eps = convert_value(sum(w[:, j : j + 1] * e for j, e in enumerate(epss)), "epsilon", "score", ts, xs, schedule)
        diff = np.abs(via_score - via_eps)
        order_abs = max(order_abs, float(np.max(diff)))
        order = max(order, float(np.max(diff / np.maximum(1.0, np.abs(via_score)))))
    return worst, order, order_abs


def suite_conversions(cfg: ExperimentConfig, seed: int):
    sched = cfg.schedule()
    n = cfg["verify"]["conversion_probes"]
    worst, order, order_abs = conversion_errors(sched, n, seed)
    top = max(worst.values())
    return [
        Check("conversions.round_trip_max_abs", top, 1e-12, top <= 1e-12, f"pairs={len(worst)} probes={n}"),
        Check("conversions.composition_order_scaled", order, 1e-12, order <= 1e-12, f"max_abs={order_abs:.3g}"),
    ]


def unbiased_pair(sigma2, dim):
    base = GaussianMixture.gaussian(np.zeros(dim))
    return (
        EstimatorSpec(base, noise_cov=sigma2[0] * np.eye(dim), name="noisy1"),
        EstimatorSpec(base, noise_cov=sigma2[1] * np.eye(dim), name="noisy2"),
    )


def suite_mse(cfg: ExperimentConfig, seed: int):
    v = cfg["verify"]
    sched = cfg.schedule()
    dim = v["mse_dim"]
    s1, s2 = unbiased_pair(v["mse_sigma2"], dim)
    x = np.zeros(dim)
    quad = analytic_mse(s1, s2, sched, 0.5, x)
    grid = np.round(np.arange(0.0, 1.0 + 1e-12, v["mse_grid_step"]), 12)
    curve = empirical_mse_curve(s1, s2, sched, 0.5, x, grid, v["mse_n_mc"], seed)
    A, B, C, r2 = curve.fit()
    rel = max(abs(A - quad.A) / abs(quad.A), abs(B - quad.B) / max(abs(quad.B), 1e-300),
              abs(C - quad.C) / abs(quad.C))
    wmin = curve.argmin()
    checks = [
        Check("mse.analytic_w_star", quad.w_star, 0.0, True, f"A={quad.A:.6g} B={quad.B:.6g} C={quad.C:.6g}"),
        Check("mse.empirical_argmin_vs_w_star", abs(wmin - quad.w_star), 0.02, abs(wmin - quad.w_star) <= 0.02,
              f"argmin={wmin:.3f}"),
        Check("mse.fit_coefficients_rel_err", rel, 0.02, rel <= 0.02, f"fit=({A:.5g},{B:.5g},{C:.5g}) r2={r2:.6f}"),
        Check("mse.q_star_not_above_endpoints", quad.q_star - min(quad(0.0), quad(1.0)), 1e-9,
              quad.q_star <= min(quad(0.0), quad(1.0)) + 1e-9),
    ]
    # deterministic special case: opposing biases cancel exactly
    base = GaussianMixture.gaussian(np.zeros(dim))
    e = np.eye(dim)[0] * 0.3
    q2 = analytic_mse(EstimatorSpec(base, "constant", e), EstimatorSpec(base, "constant", -e), sched, 0.5, x)
    checks.append(Check("mse.opposing_bias_q_star", abs(q2.q_star), 1e-12, abs(q2.q_star) <= 1e-12,
                        f"w*={q2.w_star:.6g}"))
    return checks, curve, quad


def gronwall_fixture(bias_norm: float):
    base = GaussianMixture.gaussian([0.5, -0.3], np.diag([0.6, 1.5]))
    direction = np.array([1.0, 1.0]) / np.sqrt(2.0)
    return base, EstimatorSpec(base, "constant", bias_norm * direction, name="biased")


def suite_gronwall(cfg: ExperimentConfig, seed: int):
    v = cfg["verify"]
    sched = cfg.schedule()
    base, spec = gronwall_fixture(v["gronwall_bias"])
    cert = gronwall_certificate(base, spec, OdeDynamics(sched), v["gronwall_steps"], v["gronwall_pairs"], seed)
    frac = float(np.mean(cert.measured <= cert.pathwise))
    checks = [
        Check("gronwall.fraction_within_pathwise", frac, 1.0, frac == 1.0, f"min_slack={cert.slack.min():.4g}"),
        Check("gronwall.expected_covers_mean_measured", cert.expected - cert.measured.mean(), 0.0,
              cert.expected >= cert.measured.mean(), f"expected={cert.expected:.4g} mean={cert.measured.mean():.4g}"),
        Check("gronwall.expected_covers_mean_pathwise", cert.expected - cert.pathwise.mean(), 0.0,
              cert.expected >= cert.pathwise.mean() * (1 - 1e-12)),
    ]
    if v["gronwall_bias"] == 0.0:
        exact = bool(np.all(cert.measured == 0.0) and np.all(cert.pathwise == 0.0) and cert.expected == 0.0)
        checks.append(Check("gronwall.zero_bias_zero_bounds", float(cert.expected), 0.0, exact,
                            f"slack_equals_bound={bool(np.all(cert.slack == cert.pathwise))}"))
    tau = np.linspace(0.0, 1.0, 1001)
    spot = expected_bound(tau, 1.0, 1.0, 1.0)
    ref = np.sqrt((np.e**2 - 1) / 2)
    checks.append(Check("gronwall.closed_form_spot", abs(spot - ref), 1e-3, abs(spot - ref) <= 1e-3,
                        f"bound={spot:.6f} closed_form={ref:.6f}"))
    return checks, cert


def suite_transfer(cfg: ExperimentConfig, seed: int):
    v = cfg["verify"]
    sched = cfg.schedule()
    base, _ = gronwall_fixture(0.0)
    delta = v["transfer_delta"]
    direction = np.array([1.0, 1.0]) / np.sqrt(2.0)
    s1 = EstimatorSpec(base, "constant", delta * direction)
    s2 = EstimatorSpec(base, "constant", -delta * direction)
    rep = transfer_check(s1, s2, [0.0, 0.25, 0.5, 0.75, 1.0], OdeDynamics(sched),
                          v["transfer_steps"], v["transfer_pairs"], seed)
    mid = next(r for r in rep.rows if r.w == 0.5)
    return [
        Check("transfer.composed_error_at_half", mid.measured_mean, 1e-9, mid.measured_mean <= 1e-9),
        Check("transfer.parent_errors_min", min(rep.parent_measured), 0.05, min(rep.parent_measured) > 0.05),
        Check("transfer.bound_transfer", float(rep.transfer_holds), 1.0, rep.transfer_holds),
    ], rep


def run_suite(name: str, cfg: ExperimentConfig, seed: int):
    """Returns ``(checks, extras)`` where extras holds plottable artifacts."""
    if name == "conversions":
        return suite_conversions(cfg, seed), {}
    if name == "mse":
        checks, curve, quad = suite_mse(cfg, seed)
        return checks, {"mse": (curve, quad)}
    if name == "gronwall":
        checks, cert = suite_gronwall(cfg, seed)
        return checks, {"gronwall": cert}
    if name == "transfer":
        checks, rep = suite_transfer(cfg, seed)
        return checks, {"transfer": rep}
    raise ValueError(f"unknown suite {name!r}")
