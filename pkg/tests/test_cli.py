import csv
import json

import pytest
from click.testing import CliRunner

from mrp.cli import main

POISSON = """\
[family]
ancestor = exponential
rate = 1

[chain]
kernel = matrix
states = 1
row1 = 1

[experiment]
kind = U
initial = 1
t = 10
reps = 20000
seed = 1

[tolerance]
U_exact = 3 stderr
"""

PARETO_GRID = """\
[family]
ancestor = pareto
alpha = 0.5
scale = 1

[chain]
kernel = matrix
states = 1, 2
row1 = 0.9, 0.1
row2 = 0.2, 0.8

[experiment]
kind = GridSolve
initial = each
target = states: 1
t = 10, 20
reps = 3000
seed = 4

[solver]
term = PhiTail
dt = 0.01
n_max = 150

[tolerance]
series = abs 1e-4
mc = 3 stderr + 0.1
"""


@pytest.fixture
def runner():
    return CliRunner()


def _write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_poisson_run(runner, tmp_path):
    cfg = _write(tmp_path, POISSON)
    res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "out"), "--threads", "1"])
    assert res.exit_code == 0, res.output
    rows = _rows(tmp_path / "out" / "results.csv")
    assert [r["experiment"] for r in rows] == ["U", "U_exact"]
    assert float(rows[0]["predicted"]) == 10.0 and float(rows[1]["predicted"]) == 11.0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["all_passed"] and summary["seed"] == 1
    assert summary["config"]["experiment"]["reps"] == "20000"
    assert summary["rows"][1]["passed"] is True and summary["rows"][0]["passed"] is None


def test_malformed_row_exits_2(runner, tmp_path):
    cfg = _write(tmp_path, POISSON.replace("states = 1\nrow1 = 1", "states = 1, 2\nrow1 = 0.5, 0.5\nrow2 = 0.45, 0.45"))
    res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "out")])
    assert res.exit_code == 2
    assert "row2" in res.output and "row 2" in res.output and "line 9" in res.output


def test_missing_config_exits_2(runner, tmp_path):
    res = runner.invoke(main, ["run", str(tmp_path / "nope.ini")])
    assert res.exit_code == 2


def test_failed_tolerance_exits_1(runner, tmp_path):
    cfg = _write(tmp_path, POISSON + "U = rel 0.001\n")
    res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "out"), "--threads", "1"])
    assert res.exit_code == 1
    assert "FAIL" in res.output


def test_budget_overrun_exits_3(runner, tmp_path):
    text = POISSON.replace("t = 10", "t = 100000").replace("reps = 20000", "reps = 2\nmax_events = 1000")
    res = runner.invoke(main, ["run", str(_write(tmp_path, text)), "--out", str(tmp_path / "out")])
    assert res.exit_code == 3


def test_reruns_are_byte_identical_across_threads(runner, tmp_path):
    cfg = _write(tmp_path, PARETO_GRID)
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"out{threads}"
        res = runner.invoke(main, ["run", str(cfg), "--out", str(out), "--threads", threads])
        assert res.exit_code == 0, res.output
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1]
    assert (tmp_path / "out1" / "grid.csv").exists()


def test_seed_flag_overrides(runner, tmp_path):
    cfg = _write(tmp_path, POISSON.replace("reps = 20000", "reps = 200"))
    runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"])
    runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "b"), "--threads", "1", "--seed", "99"])
    assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 99


def test_compare(runner, tmp_path):
    cfg = _write(tmp_path, POISSON.replace("reps = 20000", "reps = 200"))
    runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"])
    a = tmp_path / "a" / "results.csv"
    res = runner.invoke(main, ["compare", str(a), str(a), "--tol-stderr", "0"])
    assert res.exit_code == 0
    lines = [ln for ln in res.output.splitlines() if ln.startswith("U")]
    assert lines and all(",0,0," in ln for ln in lines)

    other = _write(tmp_path, POISSON.replace("reps = 20000", "reps = 200").replace("t = 10", "t = 10, 20"), "b.ini")
    runner.invoke(main, ["run", str(other), "--out", str(tmp_path / "b"), "--threads", "1"])
    res = runner.invoke(main, ["compare", str(a), str(tmp_path / "b" / "results.csv")])
    assert res.exit_code == 2

    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert runner.invoke(main, ["compare", str(a), str(bad)]).exit_code == 2


def test_preset_d2_is_energy_independent(runner, tmp_path):
    preds = []
    for E in ("1", "4"):
        out = tmp_path / f"E{E}"
        res = runner.invoke(main, ["preset", "--d", "2", "--E", E, "--C", "1", "--t", "1e4,1e8",
                                   "--reps", "50", "--initial", "each", "--out", str(out), "--threads", "1"])
        assert res.exit_code == 0, res.output
        preds.append([r["predicted"] for r in _rows(out / "results.csv")])
    assert preds[0] == preds[1]


def test_preset_rejects_bad_dimension(runner, tmp_path):
    res = runner.invoke(main, ["preset", "--d", "3", "--E", "1"])
    assert res.exit_code == 2
