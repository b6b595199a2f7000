import json

import pytest

from scorecomp.cli import main

FAST = """
[verify]
mse_n_mc = 20000
mse_grid_step = 0.01
gronwall_steps = 100
gronwall_pairs = 20
transfer_steps = 50
transfer_pairs = 10
conversion_probes = 500
"""


@pytest.fixture
def fast_cfg(tmp_path):
    p = tmp_path / "fast.toml"
    p.write_text(FAST)
    return str(p)


def test_sample_zero(tmp_path):
    out = tmp_path / "o"
    assert main(["sample", "--n", "0", "--out", str(out)]) == 0
    assert (out / "samples.csv").read_text() == "id,x0,x1\n"
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "sample" and m["seed"] == 0
    assert set(m["versions"]) == {"scorecomp", "numpy", "scipy", "python"}
    assert "samples.csv" in m["artifacts"]
    assert (out / "config.toml").exists()


def test_sample_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["sample", "--n", "20", "--steps", "10", "--trajectories", "--seed", "4"]
    assert main(args + ["--out", str(a)]) == 0
    first = {p.name: p.read_bytes() for p in a.iterdir()}
    assert main(args + ["--out", str(a)]) == 0
    assert {p.name: p.read_bytes() for p in a.iterdir()} == first
    # primary outputs do not depend on the output location
    assert main(args + ["--out", str(b)]) == 0
    for name in ("samples.csv", "trajectories.jsonl"):
        assert (b / name).read_bytes() == first[name]
    assert len((a / "trajectories.jsonl").read_text().splitlines()) == 20


def test_sweep_eleven_rows(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--grid-step", "0.1", "--episodes", "20", "--out", str(out)]) == 0
    rows = (out / "pool.csv").read_text().splitlines()
    assert len(rows) == 12
    assert (out / "sweep.svg").read_text().startswith("<svg")
    assert len(json.loads((out / "pool.json").read_text())["cells"]) == 11


def test_bench(tmp_path):
    out = tmp_path / "b"
    assert main(["bench", "--n", "50", "--out", str(out)]) == 0
    rows = (out / "bench.csv").read_text().splitlines()
    assert rows[0].startswith("field,") and len(rows) == 4


def test_verify_conversions(tmp_path, capsys, fast_cfg):
    out = tmp_path / "v"
    assert main(["verify", "conversions", "--config", fast_cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "PASS  conversions.round_trip_max_abs" in text
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["suites"]["conversions"]["checks"][0]["value"] <= 1e-12


def test_verify_mse_reports_w_star(tmp_path, fast_cfg):
    out = tmp_path / "v"
    assert main(["verify", "mse", "--config", fast_cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert abs(rep["suites"]["mse"]["quadratic"]["w_star"] - 0.8) <= 0.02
    assert (out / "mse_curve.svg").exists()


def test_verify_gronwall_zero_bias(tmp_path, fast_cfg):
    p = tmp_path / "zero.toml"
    p.write_text(FAST.replace("[verify]", "[verify]\ngronwall_bias = 0.0"))
    out = tmp_path / "v"
    assert main(["verify", "gronwall", "--config", str(p), "--out", str(out)]) == 0
    checks = json.loads((out / "report.json").read_text())["suites"]["gronwall"]["checks"]
    zero = next(c for c in checks if c["name"] == "gronwall.zero_bias_zero_bounds")
    assert zero["passed"] and zero["value"] == 0.0


def test_verify_all_and_failure_exit(tmp_path, fast_cfg):
    assert main(["verify", "--config", fast_cfg, "--out", str(tmp_path / "all")]) == 0
    # an unattainable mse fixture: too few draws for the 2% coefficient check
    p = tmp_path / "tiny.toml"
    p.write_text("[verify]\nmse_n_mc = 20\nmse_grid_step = 0.1\n")
    assert main(["verify", "mse", "--config", str(p), "--out", str(tmp_path / "f")]) == 1


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[sampler]\nsolvr = 'ddim'\n")
    assert main(["--config", str(bad), "sample", "--out", str(tmp_path / "x")]) == 2
    assert "sampler.solvr" in capsys.readouterr().err
    assert main(["sample", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["sample", "--solver", "rk4"]) == 2
    assert main(["sweep", "--grid-step", "0.3", "--out", str(tmp_path / "y")]) == 2
    assert main(["sample", "--n", "-1", "--out", str(tmp_path / "z")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["sample", "--out", str(blocker / "sub")]) == 2


def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("SCORECOMP_SEED", "5")
    assert main(["sample", "--n", "3", "--steps", "2", "--out", str(tmp_path / "env")]) == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["seed"] == 5
    assert main(["--seed", "6", "sample", "--n", "3", "--steps", "2", "--out", str(tmp_path / "flag")]) == 0
    assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["seed"] == 6
    monkeypatch.setenv("SCORECOMP_WORKERS", "zero")
    assert main(["sample", "--n", "1", "--out", str(tmp_path / "w")]) == 2


def test_flow_schedule_needs_t_max_below_one(tmp_path):
    p = tmp_path / "flow.toml"
    p.write_text('[schedule]\nkind = "flow-linear"\n')
    assert main(["--config", str(p), "sample", "--n", "5", "--steps", "5", "--out", str(tmp_path / "a")]) == 2
    assert main(["--config", str(p), "sample", "--n", "5", "--steps", "5", "--t-max", "0.999",
                 "--out", str(tmp_path / "b")]) == 0
