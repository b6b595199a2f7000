"""Experiment configuration: a TOML file with named sections.

Every section has defaults, so an empty file (or no file) is a valid
configuration. Parsing validates names and shapes and reports the offending
field as a dotted path.
"""
from __future__ import annotations

import copy
import hashlib
import sys
from dataclasses import dataclass, field

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bench import BenchTask
from .compose import CompositionSpec, compose
from .oracle import EstimatorSpec, FieldError, GaussianMixture, ScoreField, make_estimator, oracle_field
from .schedule import KINDS, SOLVERS, NoiseSchedule, ScheduleError

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration could not be parsed or validated."""


DEFAULTS: dict = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "out": "runs/default",
    "schedule": {"kind": "vp-linear", "beta_min": 0.1, "beta_max": 20.0},
    "mixtures": [
        {
            "name": "data",
            "components": [{"weight": 1.0, "mean": [0.0, 0.0], "cov": [[0.01, 0.0], [0.0, 0.01]]}],
        }
    ],
    "estimators": [
        {"name": "policy1", "base": "data", "bias": "mean-shift", "bias_value": [1.2, 0.0]},
        {"name": "policy2", "base": "data", "bias": "mean-shift", "bias_value": [-1.2, 0.0]},
    ],
    "composition": {
        "operator": "convex",
        "members": ["policy1", "policy2"],
        "weights": [0.5, 0.5],
        "temperature": 1.0,
        "offset": 0.0,
        "uncond": "",
    },
    "sampler": {"solver": "ddim", "steps": 100, "n": 1000},
    "task": {"target": [0.0, 0.0], "radius": 0.2, "data": "data", "metric": "success-rate"},
    "sweep": {"grid_step": 0.1, "episodes": 200},
    "verify": {
        "mse_sigma2": [1.0, 4.0],
        "mse_dim": 2,
        "mse_n_mc": 1_000_000,
        "mse_grid_step": 0.001,
        "gronwall_bias": 0.1,
        "gronwall_steps": 1000,
        "gronwall_pairs": 1000,
        "transfer_delta": 0.1,
        "transfer_steps": 200,
        "transfer_pairs": 100,
        "conversion_probes": 10_000,
    },
}

_SECTIONS = {k for k, v in DEFAULTS.items() if isinstance(v, dict)}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a section")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _int(value, where, lo=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{where}: must be >= {lo}")
    return value


def _array(value, where, ndim):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: expected a numeric array") from err
    if arr.ndim != ndim:
        raise ConfigError(f"{where}: expected a {ndim}-d array, got shape {arr.shape}")
    return arr


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULTS, raw))
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"TOML parse error: {err}") from err
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                text = fh.read().decode("utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        return cls.from_toml(text)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    def with_overrides(self, **top) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        data.update({k: v for k, v in top.items() if v is not None})
        return ExperimentConfig.from_dict(data)

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        d = self.data
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: unsupported version {d['schema_version']!r}")
        _int(d["seed"], "seed", 0)
        try:
            self.schedule()
        except ScheduleError as err:
            raise ConfigError(f"schedule: {err}") from err
        if d["schedule"]["kind"] not in KINDS:
            raise ConfigError(f"schedule.kind: unknown kind {d['schedule']['kind']!r}")
        names = set()
        for i, m in enumerate(d["mixtures"]):
            where = f"mixtures[{i}]"
            if m.get("name") in names or not m.get("name"):
                raise ConfigError(f"{where}.name: missing or duplicate")
            names.add(m["name"])
            self.mixture(m["name"])
        est_names = set()
        for i, e in enumerate(d["estimators"]):
            where = f"estimators[{i}]"
            if not e.get("name") or e["name"] in est_names:
                raise ConfigError(f"{where}.name: missing or duplicate")
            est_names.add(e["name"])
            if e.get("base") not in names:
                raise ConfigError(f"{where}.base: unknown mixture {e.get('base')!r}")
            self.estimator_spec(e["name"])
        comp = d["composition"]
        for j, name in enumerate(comp["members"]):
            if name not in est_names and name not in names:
                raise ConfigError(f"composition.members[{j}]: unknown field {name!r}")
        if comp["uncond"] and comp["uncond"] not in est_names | names:
            raise ConfigError(f"composition.uncond: unknown field {comp['uncond']!r}")
        sm = d["sampler"]
        if sm["solver"] not in SOLVERS:
            raise ConfigError(f"sampler.solver: unknown solver {sm['solver']!r}")
        _int(sm["steps"], "sampler.steps", 1)
        _int(sm["n"], "sampler.n", 0)
        task = d["task"]
        if task["data"] not in names:
            raise ConfigError(f"task.data: unknown mixture {task['data']!r}")
        _num(task["radius"], "task.radius")
        _num(d["sweep"]["grid_step"], "sweep.grid_step")
        _int(d["sweep"]["episodes"], "sweep.episodes", 1)
        try:
            self.task()
        except ValueError as err:
            raise ConfigError(f"task: {err}") from err
        try:
            self.composed_field()
        except (ValueError, FieldError) as err:
            raise ConfigError(f"composition: {err}") from err

    # -- builders ----------------------------------------------------------

    def schedule(self) -> NoiseSchedule:
        s = self.data["schedule"]
        return NoiseSchedule(s["kind"], _num(s["beta_min"], "schedule.beta_min"), _num(s["beta_max"], "schedule.beta_max"))

    def mixture(self, name: str) -> GaussianMixture:
        for i, m in enumerate(self.data["mixtures"]):
            if m.get("name") == name:
                comps = m.get("components") or []
                if not comps:
                    raise ConfigError(f"mixtures[{i}].components: empty")
                w = [_num(c.get("weight"), f"mixtures[{i}].components[{j}].weight") for j, c in enumerate(comps)]
                mu = [_array(c.get("mean"), f"mixtures[{i}].components[{j}].mean", 1) for j, c in enumerate(comps)]
                cov = [_array(c.get("cov"), f"mixtures[{i}].components[{j}].cov", 2) for j, c in enumerate(comps)]
                try:
                    return GaussianMixture(w, np.stack(mu), np.stack(cov))
                except (FieldError, ValueError) as err:
                    raise ConfigError(f"mixtures[{i}]: {err}") from err
        raise ConfigError(f"unknown mixture {name!r}")

    def estimator_spec(self, name: str) -> EstimatorSpec:
        for i, e in enumerate(self.data["estimators"]):
            if e.get("name") == name:
                try:
                    return EstimatorSpec(
                        self.mixture(e["base"]),
                        e.get("bias", "none"),
                        e.get("bias_value"),
                        e.get("noise_cov"),
                        e.get("freshness", "per-call"),
                        name=name,
                    )
                except (FieldError, ValueError, TypeError) as err:
                    raise ConfigError(f"estimators[{i}]: {err}") from err
        raise ConfigError(f"unknown estimator {name!r}")

    def field(self, name: str, seed: int | None = None) -> ScoreField:
        sched = self.schedule()
        seed = self.data["seed"] if seed is None else seed
        if any(e.get("name") == name for e in self.data["estimators"]):
            return make_estimator(self.estimator_spec(name), sched, seed)
        return oracle_field(self.mixture(name), sched, name=name)

    def members(self, seed: int | None = None):
        return [self.field(n, seed) for n in self.data["composition"]["members"]]

    def composed_field(self, seed: int | None = None, weights=None) -> ScoreField:
        c = self.data["composition"]
        uncond = self.field(c["uncond"], seed) if c["uncond"] else None
        spec = CompositionSpec(
            c["operator"],
            self.members(seed),
            c["weights"] if weights is None else weights,
            uncond=uncond,
            temperature=_num(c["temperature"], "composition.temperature"),
            offset=c["offset"],
        )
        return compose(spec)

    def task(self) -> BenchTask:
        t = self.data["task"]
        return BenchTask(
            _array(t["target"], "task.target", 1),
            _num(t["radius"], "task.radius"),
            self.mixture(t["data"]),
            horizon=self.data["sampler"]["steps"],
            metric=t["metric"],
        )

    def __getitem__(self, key):
        return self.data[key]
