"""Command-line entry point: ``scorecomp {verify,sample,sweep,bench}``.

Shared flags (``--config``, ``--seed``, ``--out``, ``--workers``) are
accepted before or after the subcommand. ``SCORECOMP_SEED`` and
``SCORECOMP_WORKERS`` override the config file; explicit flags override both.

Exit codes: 0 success, 1 a verified invariant failed, 2 bad config or flags.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bench import run_bench, task_evaluator
from .config import ConfigError, ExperimentConfig
from .oracle import FieldError
from .param import SingularTimeError
from .sampler import sample, write_endpoints_csv, write_jsonl
from .schedule import SOLVERS, ScheduleError
from .search import grid_search, sweep_report, weight_grid
from .svg import line_plot, scatter_plot
from .verify import SUITES, run_suite

log = logging.getLogger("scorecomp")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _env_int(name):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{name}={raw!r} is not an integer") from None


class Run:
    """Resolved config, seed and output directory of one invocation.

    All artifacts go through :meth:`write`, and :meth:`finish` records them in
    ``manifest.json`` next to the resolved config.
    """

    def __init__(self, args):
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        seed = args.seed if args.seed is not None else _env_int("SCORECOMP_SEED")
        if seed is not None:
            if seed < 0:
                raise UsageError("seed must be nonnegative")
            cfg = cfg.with_overrides(seed=seed)
        if args.out is not None:
            cfg = cfg.with_overrides(out=args.out)
        workers = args.workers if args.workers is not None else _env_int("SCORECOMP_WORKERS")
        workers = 1 if workers is None else workers
        if workers < 1:
            raise UsageError("workers must be >= 1")
        self.cfg = cfg
        self.seed = cfg["seed"]
        self.workers = workers
        self.out = Path(cfg["out"])
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            probe = self.out / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as err:
            raise UsageError(f"output directory {self.out} is not writable: {err}") from err
        self.artifacts = []

    def path(self, name) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def write(self, name, text: str) -> None:
        self.path(name).write_text(text)

    def finish(self, command: str, params: dict) -> None:
        (self.out / "config.toml").write_text(self.cfg.to_toml())
        manifest = {
            "command": command,
            "params": params,
            "seed": self.seed,
            "workers": self.workers,
            "config_sha256": self.cfg.sha256(),
            "config_file": "config.toml",
            "artifacts": {name: _sha256(self.out / name) for name in sorted(set(self.artifacts))},
            "versions": {
                "scorecomp": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        }
        (self.out / "manifest.json").write_text(_dump(manifest))


# -- commands ---------------------------------------------------------------


def cmd_verify(args, run: Run) -> int:
    suites = SUITES if args.suite == "all" else (args.suite,)
    report, failed = {"suites": {}}, 0
    for name in suites:
        checks, extras = run_suite(name, run.cfg, run.seed)
        entry = {"checks": [c.to_dict() for c in checks], "passed": all(c.passed for c in checks)}
        for c in checks:
            print(c.line())
        failed += sum(not c.passed for c in checks)
        if "mse" in extras:
            curve, quad = extras["mse"]
            entry["quadratic"] = {"A": quad.A, "B": quad.B, "C": quad.C, "w_star": quad.w_star, "q_star": quad.q_star}
            step = max(1, len(curve.w) // 200)
            run.write("mse_curve.svg", line_plot(curve.w[::step], curve.q[::step], curve.se[::step],
                                                   title="Q(w)", xlabel="w", ylabel="MSE"))
        if "gronwall" in extras:
            cert = extras["gronwall"]
            entry["certificate"] = cert.summary()
            run.write("gronwall_scatter.svg", scatter_plot(cert.pathwise, cert.measured, title="measured vs bound",
                                                           xlabel="pathwise bound", ylabel="measured error"))
        if "transfer" in extras:
            entry["transfer"] = extras["transfer"].to_dict()
        report["suites"][name] = entry
    report["passed"] = failed == 0
    run.write("report.json", _dump(report))
    print(f"{'PASS' if failed == 0 else 'FAIL'}  {len(suites)} suite(s), {failed} failing check(s)")
    run.finish("verify", {"suite": args.suite})
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def cmd_sample(args, run: Run) -> int:
    sm = run.cfg["sampler"]
    n = sm["n"] if args.n is None else args.n
    steps = sm["steps"] if args.steps is None else args.steps
    solver = args.solver or sm["solver"]
    if n < 0 or steps < 1:
        raise UsageError("--n must be >= 0 and --steps >= 1")
    field = run.cfg.field(args.field, run.seed) if args.field else run.cfg.composed_field(run.seed)
    batch = sample(field, run.cfg.schedule(), solver, steps, n, run.seed, t_max=args.t_max,
                   record="full" if args.trajectories else "ends")
    write_endpoints_csv(batch.terminal.reshape(n, field.dim), run.path("samples.csv"))
    if args.trajectories:
        write_jsonl(batch, run.path("trajectories.jsonl"), {"field": field.name})
    print(f"wrote {n} samples ({solver}, {steps} steps) to {run.out}")
    run.finish("sample", {"n": n, "steps": steps, "solver": solver, "field": args.field or "",
                          "t_max": args.t_max, "trajectories": bool(args.trajectories)})
    return EXIT_OK


def cmd_sweep(args, run: Run) -> int:
    sw = run.cfg["sweep"]
    step = sw["grid_step"] if args.grid_step is None else args.grid_step
    episodes = sw["episodes"] if args.episodes is None else args.episodes
    try:
        weight_grid(step)
    except ValueError as err:
        raise UsageError(str(err)) from err
    if episodes < 1:
        raise UsageError("--episodes must be >= 1")
    members = run.cfg.members(run.seed)
    if len(members) != 2:
        raise UsageError("sweep needs exactly two composition members")
    solver = run.cfg["sampler"]["solver"]
    w_star, pool = grid_search(members, task_evaluator(run.cfg.task(), solver, run.cfg.schedule()), step, episodes, run.seed, workers=run.workers)
    header, rows, svg = sweep_report(pool)
    with open(run.path("pool.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    run.write("pool.json", pool.to_json())
    run.write("sweep.svg", svg)
    best = pool.best()
    print(f"w1* = {w_star:g}  reward = {best.mean_reward:.4f} +- {best.se:.4f}  ({len(pool.cells)} cells)")
    run.finish("sweep", {"grid_step": step, "episodes": episodes, "solver": solver})
    return EXIT_OK


def cmd_bench(args, run: Run) -> int:
    sm = run.cfg["sampler"]
    n = sm["n"] if args.n is None else args.n
    solver = args.solver or sm["solver"]
    if n < 1:
        raise UsageError("--n must be >= 1")
    task = run.cfg.task()
    sched = run.cfg.schedule()
    names = list(args.field) if args.field else list(run.cfg["composition"]["members"]) + ["composed"]
    header = ["field", "episodes", "success_rate", "se", "metric", "metric_value"]
    rows = []
    for name in names:
        field = run.cfg.composed_field(run.seed) if name == "composed" else run.cfg.field(name, run.seed)
        res = run_bench(task, field, n, solver, run.seed, sched)
        rows.append([name, n, repr(res.success_rate), repr(res.se), task.metric, repr(res.metric_value)])
        print(f"{name:>12}  SR={res.success_rate:.4f} +- {res.se:.4f}  {task.metric}={res.metric_value:.6g}")
    with open(run.path("bench.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    run.finish("bench", {"n": n, "solver": solver, "fields": names})
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _common(parser, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {"default": None}
    parser.add_argument("--config", metavar="PATH", help="experiment config (TOML)", **kw)
    parser.add_argument("--seed", type=int, help="master seed (env SCORECOMP_SEED)", **kw)
    parser.add_argument("--out", metavar="DIR", help="output directory", **kw)
    parser.add_argument("--workers", type=int, help="parallel workers (env SCORECOMP_WORKERS)", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorecomp", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run certification suites")
    _common(p, suppress=True)
    p.add_argument("suite", nargs="?", default="all", choices=SUITES + ("all",))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample", help="draw samples from the composed (or a named) field")
    _common(p, suppress=True)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--steps", type=int, help="solver steps")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--field", help="sample a single named field instead of the composition")
    p.add_argument("--t-max", type=float, default=1.0, help="start time (use < 1 for flow-linear score fields)")
    p.add_argument("--trajectories", action="store_true", help="also write full paths as JSON lines")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="grid search over the weight of two members")
    _common(p, suppress=True)
    p.add_argument("--grid-step", type=float)
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="success rate of members and their composition")
    _common(p, suppress=True)
    p.add_argument("--n", type=int, help="episodes per field")
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--field", action="append", help="field to evaluate ('composed' for the composition); repeatable")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run = Run(args)
        return args.func(args, run)
    except (ConfigError, UsageError, ScheduleError, FieldError, SingularTimeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
