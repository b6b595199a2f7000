"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary.
"""
import time

import numpy as np

from scorecomp.bench import BenchTask, mean_shift_pair, task_evaluator
from scorecomp.cli import main
from scorecomp.oracle import EstimatorSpec, GaussianMixture, oracle_field, oracle_logdensity, oracle_score
from scorecomp.sampler import OdeDynamics, sample
from scorecomp.schedule import KINDS, NoiseSchedule
from scorecomp.search import grid_search, is_unimodal
from scorecomp.theory import (
    analytic_mse, transfer_check, empirical_mse_curve, expected_bound, gronwall_certificate,
)
from scorecomp.verify import conversion_errors, gronwall_fixture

VP = NoiseSchedule("vp-linear")


def test_c1_single_step_certification(acceptance):
    start = time.perf_counter()
    base = GaussianMixture.gaussian(np.zeros(2))
    s1 = EstimatorSpec(base, noise_cov=1.0 * np.eye(2))
    s2 = EstimatorSpec(base, noise_cov=4.0 * np.eye(2))
    quad = analytic_mse(s1, s2, VP, 0.5, np.zeros(2))
    grid = np.round(np.arange(0.0, 1.0 + 1e-12, 0.001), 12)
    curve = empirical_mse_curve(s1, s2, VP, 0.5, np.zeros(2), grid, 1_000_000, seed=0)
    A, B, C, r2 = curve.fit()
    rel = max(abs(A - quad.A) / abs(quad.A), abs(B - quad.B) / abs(quad.B), abs(C - quad.C) / abs(quad.C))
    elapsed = time.perf_counter() - start
    wmin = curve.argmin()
    ok = abs(wmin - 0.8) <= 0.02 and rel <= 0.02 and elapsed < 30
    acceptance(1, "single-step certification", ok,
               f"argmin={wmin:.3f} (w*={quad.w_star:.3f}), coef rel err={rel:.2e}, r2={r2:.6f}, {elapsed:.1f}s")
    assert ok


def random_pair(rng, base):
    b1, b2 = rng.normal(0, 0.5, (2, base.dim))
    covs = []
    for _ in range(2):
        m = rng.normal(size=(base.dim, base.dim))
        covs.append(m @ m.T + 0.2 * np.eye(base.dim))
    rho = float(rng.uniform(-0.9, 0.9))
    return (EstimatorSpec(base, "constant", b1, noise_cov=covs[0]),
            EstimatorSpec(base, "constant", b2, noise_cov=covs[1]), rho)


def test_c2_improvement_property(acceptance):
    rng = np.random.default_rng(2024)
    base = GaussianMixture.gaussian(np.zeros(2))
    x = np.zeros(2)
    not_worse = strict = qualifying = interior = 0
    for i in range(100):
        s1, s2, rho = random_pair(rng, base)
        quad = analytic_mse(s1, s2, VP, 0.5, x, correlation=rho)
        curve = empirical_mse_curve(s1, s2, VP, 0.5, x, [0.0, 1.0], 200_000, seed=i, correlation=rho)
        q0, q1 = curve.q
        q_star = float(curve.value(quad.w_star))
        w_end = 0.0 if q0 <= q1 else 1.0
        se = curve.diff_se(w_end, quad.w_star)
        gap = min(q0, q1) - q_star
        not_worse += q_star <= min(q0, q1) + 3 * se
        interior += quad.interior
        if rho != 1.0 and not np.array_equal(s1.bias_value, s2.bias_value):
            qualifying += 1
            strict += gap > 5 * se
    ok = not_worse == 100 and strict == qualifying
    acceptance(2, "improvement property", ok,
               f"not worse {not_worse}/100, strict {strict}/{qualifying}, interior w* {interior}/100")
    assert ok


def test_c3_parameterization_round_trips(acceptance):
    worst_rt = worst_order = worst_abs = 0.0
    for kind in KINDS:
        worst, order, order_abs = conversion_errors(NoiseSchedule(kind), 10_000, seed=0)
        assert len(worst) == 12
        worst_rt = max(worst_rt, max(worst.values()))
        worst_order = max(worst_order, order)
        worst_abs = max(worst_abs, order_abs)
    ok = worst_rt <= 1e-12 and worst_order <= 1e-12
    acceptance(3, "parameterization round-trips", ok,
               f"max round-trip {worst_rt:.2e}, composition order {worst_order:.2e} scaled "
               f"({worst_abs:.2e} abs, few-ulp floor at scores ~1/sigma^2) over all schedules")
    assert ok


def test_c4_gronwall(acceptance):
    dyn = OdeDynamics(VP)
    base, spec = gronwall_fixture(0.1)
    cert = gronwall_certificate(base, spec, dyn, 1000, 1000, seed=0)
    frac = float(np.mean(cert.measured <= cert.pathwise))
    zbase, zspec = gronwall_fixture(0.0)
    zero = gronwall_certificate(zbase, zspec, dyn, 1000, 1000, seed=0)
    zero_ok = bool(np.all(zero.measured == 0) and np.all(zero.pathwise == 0) and zero.expected == 0)
    spot = expected_bound(np.linspace(0, 1, 1001), 1.0, 1.0, 1.0)
    ref = np.sqrt((np.e**2 - 1) / 2)
    ok = frac == 1.0 and cert.expected >= cert.measured.mean() and zero_ok and abs(spot - ref) <= 1e-3
    acceptance(4, "Gronwall bounds", ok,
               f"within pathwise {frac:.0%}, expected {cert.expected:.4g} >= mean measured "
               f"{cert.measured.mean():.4g}, zero-bias exact={zero_ok}, spot {spot:.6f} vs {ref:.6f}")
    assert ok


def test_c5_bound_transfer(acceptance):
    base, _ = gronwall_fixture(0.0)
    d = 0.1 * np.array([1.0, 1.0]) / np.sqrt(2)
    rep = transfer_check(EstimatorSpec(base, "constant", d), EstimatorSpec(base, "constant", -d),
                          [0.0, 0.25, 0.5, 0.75, 1.0], OdeDynamics(VP), n_steps=200, n_pairs=100, seed=0)
    mid = next(r for r in rep.rows if r.w == 0.5)
    ordered = mid.bound < min(rep.parent_bound) and rep.transfer_holds
    ok = mid.measured_mean <= 1e-9 and min(rep.parent_measured) > 0.05 and ordered
    acceptance(5, "bound transfer demo", ok,
               f"composed error {mid.measured_mean:.2e}, parent errors "
               f"{rep.parent_measured[0]:.4f}/{rep.parent_measured[1]:.4f}, bound {mid.bound:.2e} < "
               f"parents {min(rep.parent_bound):.4g}")
    assert ok


DATA = GaussianMixture.gaussian([0.0, 0.0], 0.01 * np.eye(2))
BENCH_CONFIGS = {
    "symmetric": (0.2, [1.2, 0.0], [-1.2, 0.0]),
    "asymmetric": (0.2, [0.4, 0.0], [-1.2, 0.0]),
    "wide-radius": (1.0, [1.2, 0.0], [-1.2, 0.0]),
    "identical": (0.2, [0.3, 0.0], [0.3, 0.0]),
    "non-collinear": (0.3, [0.5, 0.2], [-0.6, -0.4]),
}


def sweep(name, episodes=500, seed=0):
    radius, d1, d2 = BENCH_CONFIGS[name]
    task = BenchTask(np.zeros(2), radius, DATA)
    return grid_search(mean_shift_pair(task, VP, d1, d2), task_evaluator(task), 0.1, episodes, seed=seed)


def test_c6_search_invariant(acceptance):
    details, ok = [], True
    for name in BENCH_CONFIGS:
        w, pool = sweep(name)
        r = pool.rewards()
        holds = pool.best().mean_reward >= max(r[0.0], r[1.0])
        ok &= holds
        details.append(f"{name}: w*={w:g} R={pool.best().mean_reward:.3f}")
    w_sym, _ = sweep("symmetric")
    ok &= w_sym == 0.5
    acceptance(6, "search invariant", ok, "; ".join(details) + f"; symmetric w*={w_sym:g}")
    assert ok


def test_c7_oracle_consistency(acceptance):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        k, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        covs = []
        for _ in range(k):
            m = rng.normal(size=(d, d))
            covs.append(m @ m.T + 0.3 * np.eye(d))
        mix = GaussianMixture(rng.dirichlet(np.ones(k)), rng.normal(0, 1.5, (k, d)), np.array(covs))
        sched = NoiseSchedule(KINDS[int(rng.integers(0, 3))])
        t = float(rng.uniform(0.01, 0.99))
        x = rng.normal(0, 1.0, d)
        h = 1e-5
        g = np.array([(oracle_logdensity(mix, sched, t, x + h * e) - oracle_logdensity(mix, sched, t, x - h * e))
                      / (2 * h) for e in np.eye(d)])
        s = oracle_score(mix, sched, t, x)
        worst = max(worst, np.linalg.norm(s - g) / max(np.linalg.norm(s), 1e-3))
    x = sample(oracle_field(GaussianMixture.gaussian(np.zeros(2)), VP), VP, "ddim", 100, 100_000, seed=0,
               record="ends").terminal
    mean_err = float(np.max(np.abs(x.mean(0))))
    cov_err = float(np.max(np.abs(np.cov(x.T) - np.eye(2))))
    ok = worst <= 1e-6 and mean_err <= 0.02 and cov_err <= 0.05
    acceptance(7, "oracle consistency", ok,
               f"FD rel err {worst:.2e} over 1000 probes, DDIM mean err {mean_err:.4f}, cov err {cov_err:.4f}")
    assert ok


def test_c8_findings_shape(acceptance):
    _, sym = sweep("symmetric")
    cells = sym.valid_cells()
    vals, se = [c.mean_reward for c in cells], [c.se for c in cells]
    sym_ok = is_unimodal(vals, se, 2.0) and 0.0 < sym.best().w < 1.0
    w_asym, asym = sweep("asymmetric")
    best = asym.best()
    margin = all(best.mean_reward - c.mean_reward > 2 * max(best.se, c.se)
                 for c in asym.valid_cells() if c.w < 0.5)
    asym_ok = w_asym >= 0.5 and margin and is_unimodal([c.mean_reward for c in asym.cells],
                                                       [c.se for c in asym.cells], 2.0)
    ok = sym_ok and asym_ok
    acceptance(8, "findings shape", ok,
               f"symmetric peak w={sym.best().w:g} unimodal={sym_ok}; asymmetric argmax w={w_asym:g} "
               f"beats every w<0.5 by >2 SE={margin}")
    assert ok


FAST_VERIFY = """
[verify]
mse_n_mc = 50000
mse_grid_step = 0.01
gronwall_steps = 200
gronwall_pairs = 50
transfer_steps = 100
transfer_pairs = 20
conversion_probes = 1000
"""

PRIMARY = {
    "sample": ["samples.csv", "trajectories.jsonl"],
    "sweep": ["pool.csv", "pool.json", "sweep.svg"],
    "bench": ["bench.csv"],
    "verify": ["report.json", "mse_curve.svg", "gronwall_scatter.svg"],
}


def test_c9_determinism(acceptance, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(FAST_VERIFY)
    commands = {
        "sample": ["sample", "--n", "200", "--steps", "50", "--trajectories"],
        "sweep": ["sweep", "--grid-step", "0.1", "--episodes", "100"],
        "bench": ["bench", "--n", "300"],
        "verify": ["verify", "all"],
    }
    same = {}
    for name, args in commands.items():
        outs = []
        for rep, workers in enumerate(("1", "2")):
            out = tmp_path / f"{name}{rep}"
            code = main(args + ["--config", str(cfg), "--seed", "11", "--workers", workers, "--out", str(out)])
            assert code == 0
            outs.append({f: (out / f).read_bytes() for f in PRIMARY[name]})
        same[name] = outs[0] == outs[1]
    ok = all(same.values())
    acceptance(9, "determinism", ok, ", ".join(f"{k} identical={v}" for k, v in same.items()))
    assert ok
