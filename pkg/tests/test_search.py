import json

import numpy as np
import pytest

from scorecomp.bench import BenchTask, mean_shift_pair, task_evaluator
from scorecomp.oracle import GaussianMixture, oracle_field
from scorecomp.schedule import NoiseSchedule
from scorecomp.search import Cell, RewardPool, grid_search, is_unimodal, sweep_report, weight_grid

VP = NoiseSchedule("vp-linear")
DATA = GaussianMixture.gaussian([0.0, 0.0], 0.01 * np.eye(2))


def symmetric_setup(radius=0.2, delta=1.2):
    task = BenchTask(np.zeros(2), radius, DATA)
    return task, mean_shift_pair(task, VP, [delta, 0.0], [-delta, 0.0])


def test_weight_grid():
    g = weight_grid(0.1)
    assert len(g) == 11 and g[0] == 0.0 and g[-1] == 1.0
    assert len(weight_grid(0.25)) == 5
    with pytest.raises(ValueError):
        weight_grid(0.3)


def test_identical_policies_tie_break_to_zero():
    f = oracle_field(DATA, VP)
    w, pool = grid_search([f, f], lambda field, n, seed: np.ones(n), 0.1, 5)
    assert w == 0.0
    assert len(pool.cells) == 11


def test_symmetric_bench_peaks_at_half():
    task, policies = symmetric_setup()
    w, pool = grid_search(policies, task_evaluator(task), 0.1, 500, seed=0)
    assert w == 0.5
    r = pool.rewards()
    assert pool.best().mean_reward >= max(r[0.0], r[1.0])


def test_failed_cells_are_skipped():
    f = oracle_field(DATA, VP)

    def flaky(field, n, seed):
        if field.name == "w=0.3":
            raise RuntimeError("simulator crashed")
        return np.full(n, 0.1 if field.name != "w=0.6" else 0.9)

    w, pool = grid_search([f, f], flaky, 0.1, 4)
    assert w == 0.6
    bad = [c for c in pool.cells if not c.valid]
    assert len(bad) == 1 and bad[0].w == 0.3 and "crashed" in bad[0].error
    assert len(pool.valid_cells()) == 10


def test_all_cells_failing_raises():
    f = oracle_field(DATA, VP)

    def broken(field, n, seed):
        raise ValueError("nope")

    with pytest.raises(RuntimeError):
        grid_search([f, f], broken, 0.5, 2)


def test_search_reproducible_and_worker_independent():
    task, policies = symmetric_setup()
    ev = task_evaluator(task)
    _, a = grid_search(policies, ev, 0.25, 50, seed=7)
    _, b = grid_search(policies, ev, 0.25, 50, seed=7, workers=3)
    assert a.to_json() == b.to_json()
    _, c = grid_search(policies, ev, 0.25, 50, seed=8)
    assert a.to_json() != c.to_json()
    # every cell saw the same episode seed, and cell seeds are distinct
    assert len({cell.episode_seed for cell in a.cells}) == 1
    assert len({cell.cell_seed for cell in a.cells}) == len(a.cells)


def test_search_argument_checks():
    f = oracle_field(DATA, VP)
    with pytest.raises(ValueError):
        grid_search([f, f, f], lambda *a: np.ones(1))
    with pytest.raises(ValueError):
        grid_search([f, f], lambda *a: np.ones(1), operator="or")


def test_pool_json_round_trip():
    pool = RewardPool([Cell(0.0, 10, 3, 0.3, 0.1, 1, 2), Cell(1.0, 10, 0, float("nan"), float("nan"), 1, 3, False, "x")])
    again = RewardPool.from_json(pool.to_json())
    assert again.to_json() == pool.to_json()
    assert json.loads(pool.to_json())["cells"][1]["valid"] is False


def _pool(values, se=0.01):
    ws = np.round(np.linspace(0, 1, len(values)), 12)
    return RewardPool([Cell(float(w), 100, int(v * 100), float(v), se, 0, i) for i, (w, v) in enumerate(zip(ws, values))])


def test_sweep_report_shapes(tmp_path):
    header, rows, svg = sweep_report(_pool([0.4]))
    assert len(rows) == 1 and header[0] == "w1"
    mono = _pool([0.1, 0.2, 0.3, 0.5])
    assert mono.best().w == 1.0
    header, rows, svg = sweep_report(mono, tmp_path)
    assert (tmp_path / "pool.csv").read_text().count("\n") == 5
    assert svg.startswith("<svg") and (tmp_path / "sweep.svg").read_text() == svg
    assert RewardPool.from_json((tmp_path / "pool.json").read_text()).best().w == 1.0
    with pytest.raises(ValueError):
        sweep_report(RewardPool([]))


def test_inverted_u_from_symmetric_bench():
    task, policies = symmetric_setup()
    _, pool = grid_search(policies, task_evaluator(task), 0.1, 300, seed=1)
    cells = pool.valid_cells()
    values = [c.mean_reward for c in cells]
    assert 0.0 < pool.best().w < 1.0
    assert is_unimodal(values, [c.se for c in cells])


def test_is_unimodal():
    assert is_unimodal([0, 1, 2, 1, 0], [0.01] * 5)
    assert not is_unimodal([0, 2, 0, 2, 0], [0.01] * 5)
    assert is_unimodal([0, 2, 1.99, 2, 0], [0.01] * 5)
