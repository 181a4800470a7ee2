import csv
import json

import pytest
from click.testing import CliRunner

from ehalloc.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scenario_file(runner, tmp_path):
    path = tmp_path / "sc.json"
    res = runner.invoke(main, ["gen", "--seed", "3", "--horizon", "4", "--out", str(path)])
    assert res.exit_code == 0, res.output
    return path


def test_gen_is_deterministic(runner, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        runner.invoke(main, ["gen", "--seed", "11", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_solve_prints_a_summary(runner, scenario_file, tmp_path):
    out = tmp_path / "alloc.csv"
    res = runner.invoke(main, ["solve", "--scenario", str(scenario_file), "--mode", "nonorthogonal",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    summary = json.loads(res.stdout)
    assert summary["mode"] == "nonorthogonal" and len(summary["rates"]) == 6
    assert len(list(csv.DictReader(out.open()))) == 6 * 4


def test_compare_without_timing_is_reproducible(runner, scenario_file, tmp_path):
    outs = [tmp_path / "c1.csv", tmp_path / "c2.csv"]
    for out in outs:
        res = runner.invoke(main, ["compare", "--scenario", str(scenario_file), "--policies", "greedy,equal-bandwidth",
                                   "--no-timing", "--out", str(out)])
        assert res.exit_code == 0, res.output
    assert outs[0].read_bytes() == outs[1].read_bytes()
    rows = list(csv.DictReader(outs[0].open()))
    assert [r["policy"] for r in rows] == ["optimal", "greedy", "equal-bandwidth", "optimal", "equal-bandwidth"]


def test_compare_with_empty_policy_list(runner, scenario_file, tmp_path):
    out = tmp_path / "c.csv"
    res = runner.invoke(main, ["compare", "--scenario", str(scenario_file), "--policies", "", "--mode",
                               "orthogonal", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert [r["policy"] for r in csv.DictReader(out.open())] == ["optimal"]


def test_region(runner, tmp_path):
    sc = tmp_path / "r.json"
    runner.invoke(main, ["gen", "--seed", "0", "--transmitters", "1", "--horizon", "2", "--out", str(sc)])
    out = tmp_path / "region.csv"
    res = runner.invoke(main, ["region", "--scenario", str(sc), "--points", "5", "--out", str(out)])
    assert res.exit_code == 0, res.output
    summary = json.loads(res.stdout)
    assert summary["max_gap"] <= summary["delta_bound"] + 1e-9
    assert len(list(csv.DictReader(out.open()))) == 10


def test_pf(runner, scenario_file, tmp_path):
    out = tmp_path / "trace.csv"
    res = runner.invoke(main, ["pf", "--scenario", str(scenario_file), "--samples", "2", "--iters", "30",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    summary = json.loads(res.stdout)
    assert set(summary["pf_utility"]) == {"equal", "approx"}
    assert (tmp_path / "trace_allocation.csv").exists()


def test_errors_are_machine_readable(runner, scenario_file, tmp_path):
    res = runner.invoke(main, ["solve", "--scenario", str(scenario_file), "--epsilon", "0.9"])
    assert res.exit_code == 1
    record = json.loads(res.stderr)
    assert record["error"] == "ScenarioError" and record["codes"] == ["infeasible-epsilon"]


def test_usage_errors_exit_with_two(runner, tmp_path):
    res = runner.invoke(main, ["solve", "--scenario", str(tmp_path / "missing.json")])
    assert res.exit_code == 2
    assert "error" in json.loads(res.stderr)
