from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from resilient_ncs.cli import (EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, FIXED, load_scenario, main,
                               parse_grid, run_sweep, scenario_from_dict, scenario_to_dict,
                               verify_record)
from resilient_ncs.errors import ParseError, ValidationError

from conftest import EX1, EX3_GAINS, SCENARIOS


def _write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


BASE = """
[plant.mode.1]
A = [[0.5]]
B = [[1.0]]
[attack]
alpha_bar = 0.1
beta_bar = {beta}
gamma_bar = 0.1
[design]
rho_s = 0.1
rho_u = 0.4
mu = 1.1
"""


def test_shipped_scenarios_load():
    s1 = load_scenario(SCENARIOS / "example1.toml")
    for p in range(2):
        assert np.array_equal(s1.plant.modes[p].A, EX1.modes[p].A)
        assert np.array_equal(s1.plant.modes[p].B, EX1.modes[p].B)
    assert s1.gains is None
    s3 = load_scenario(SCENARIOS / "example3.toml")
    assert np.array_equal(s3.gains[1], EX3_GAINS[1])
    assert load_scenario(SCENARIOS / "example2.toml").mixed.mu == 1.05


def test_validation_error_names_field(tmp_path):
    with pytest.raises(ValidationError, match="beta_bar"):
        load_scenario(_write(tmp_path, BASE.format(beta=1.5)))


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(_write(tmp_path, "[attack\n"))
    with pytest.raises(ParseError, match="attack"):
        load_scenario(_write(tmp_path, "[plant.mode.1]\nA=[[1.0]]\nB=[[1.0]]\n"))
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.toml")


def test_scenario_dict_round_trip():
    s = load_scenario(SCENARIOS / "example2.toml")
    back = scenario_from_dict(json.loads(json.dumps(scenario_to_dict(s))))
    assert scenario_to_dict(back) == scenario_to_dict(s)


def test_parse_grid():
    g = parse_grid("0.02:0.24:0.02")
    assert len(g) == 12 and g[0] == 0.02 and g[-1] == 0.24
    assert parse_grid("0.1:0.1:0.05") == [0.1]
    for bad in ("1:0:0.1", "0:1", "0:1:0"):
        with pytest.raises(ParseError):
            parse_grid(bad)


def test_sweeps():
    s = load_scenario(SCENARIOS / "example3.toml")
    assert run_sweep(s, "gamma_bar", []) == []
    rows = run_sweep(s, "beta_bar", [0.05, 0.1, 0.13], FIXED)
    psi = [r["psi"] for r in rows if r["feasible"]]
    assert len(psi) == 3 and psi[0] < psi[1] < psi[2]


def test_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, BASE.format(beta=1.5))
    assert main(["analyze", str(bad), "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["mixed", str(SCENARIOS / "example3.toml"), "--out", str(tmp_path)]) == EXIT_INFEASIBLE
    assert "infeasible" in capsys.readouterr().err


def test_analyze_then_verify(tmp_path):
    out = tmp_path / "a"
    assert main(["analyze", str(SCENARIOS / "example3.toml"), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "analyze.json").read_text())
    assert report["certificate"]["security"]["tau_d_star"] == pytest.approx(7.9036, abs=0.02)
    assert main(["verify", str(out / "analyze.json")]) == EXIT_OK
    # a tampered certificate must be rejected
    vals = report["certificate"]["values"]
    vals["P1"] = (-np.asarray(vals["P1"])).tolist()
    (out / "bad.json").write_text(json.dumps(report))
    assert main(["verify", str(out / "bad.json")]) == EXIT_INFEASIBLE


def test_mixed_then_verify(tmp_path):
    assert main(["mixed", str(SCENARIOS / "example2.toml"), "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "mixed.json").read_text())
    assert (report["certificate"]["tau_d1"], report["certificate"]["tau_d2"]) == (6, 0)
    scenario = scenario_from_dict(report["scenario"])
    assert verify_record(report["certificate"], scenario).passed


def test_synthesize_example1(tmp_path):
    assert main(["synthesize", str(SCENARIOS / "example1.toml"), "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "synthesize.json").read_text())
    assert report["method"] == "iterative"
    assert main(["verify", str(tmp_path / "synthesize.json")]) == EXIT_OK
    assert main(["synthesize", str(SCENARIOS / "example1.toml"), "--method", "congruence",
                 "--out", str(tmp_path)]) == EXIT_INFEASIBLE


def test_simulate_csv_round_trip(tmp_path):
    args = ["simulate", str(SCENARIOS / "example3.toml"), "--runs", "7", "--horizon", "30",
            "--seed", "2", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    with open(tmp_path / "aggregate.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "mean_state_norm", "mean_square_norm", "envelope", "psi"]
    assert len(rows) == 32
    from resilient_ncs.sim import monte_carlo
    from resilient_ncs.analysis import analyze
    s = load_scenario(SCENARIOS / "example3.toml")
    cert = analyze(s.plant, s.gains, s.attack, s.design)
    agg = monte_carlo(s, runs=7, horizon=30, seed=2, certificate=cert)
    for row, want in zip(rows[1:], agg.rows()):
        assert int(row[0]) == want[0]
        assert [float(v) for v in row[1:]] == [float(v) for v in want[1:]]
    report = json.loads((tmp_path / "simulate.json").read_text())
    assert report["seed"] == 2 and report["runs"] == 7


def test_sweep_command(tmp_path):
    args = ["sweep", str(SCENARIOS / "example3.toml"), "--param", "gamma_bar",
            "--grid", "0.02:0.24:0.02", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    rows = json.loads((tmp_path / "sweep.json").read_text())["rows"]
    ratios = [r["psi_over_gamma2"] for r in rows]
    assert len(ratios) == 12 and max(ratios) - min(ratios) <= 1e-12 * max(ratios)
