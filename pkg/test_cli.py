#!/usr/bin/env python3
"""
Tests for the command-line front end
Runs each subcommand on small grids and checks exit codes and outputs.
"""

import json
import os
import sys

import pandas as pd
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from main import EXIT_CONFIG, EXIT_INVADABLE, EXIT_OK, EXIT_SHORT_SEASON, main

FAST_GAME = [
    "--set", "integrator.step_divisor=4000",
    "--set", "game.segments=400",
    "--set", "game.max_iterations=2000",
    "--set", "game.dp_x_nodes=201",
]


@pytest.fixture
def run(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "field": {"boundary_samples": 1025},
        "hjb": {"nt": 40, "nx": 40, "steps": 10},
    }), encoding="utf-8")
    out = tmp_path / "output"

    def invoke(*args):
        return main(["--config", str(config), "--out", str(out), "--quiet", *args])

    invoke.out = out
    invoke.config = config
    return invoke


def _summary(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def test_synthesize_cooperative(run):
    assert run("synthesize", "--kind", "coop") == EXIT_OK
    out = run.out / "synthesize-coop"
    for name in ("singular_arc_coop.csv", "switch_line.csv", "boundary_coop.csv",
                 "tributaries_coop.csv", "summary.json", "report.md"):
        assert (out / name).exists()
    summary = _summary(out / "summary.json")
    assert summary["smooth_junction"] is False
    assert summary["tributaries"]["passed"] == summary["tributaries"]["checked"]
    assert summary["u0_tributary_sigma_max"] <= 1e-12
    assert summary["mutant_sigma_on_arc_min"] > 0
    assert summary["arc_relation"]["lambert_max_gap"] <= 1e-8
    assert summary["hjb"]["interior_nodes"] > 0
    assert summary["hjb"]["max_residual"] < 0.2
    arc = pd.read_csv(out / "singular_arc_coop.csv")
    assert list(arc.columns) == ["t", "x", "u", "lambda", "mu", "sigma"]
    print("✓ synthesize --kind coop")


def test_synthesize_ess_is_smooth(run):
    assert run("synthesize", "--kind", "ess") == EXIT_OK
    summary = _summary(run.out / "synthesize-ess" / "summary.json")
    assert summary["smooth_junction"] is True
    assert summary["x_bar"] == pytest.approx(2 ** 0.5 / 2, abs=1e-10)


def test_short_season_exit_code(run):
    assert run("--set", "model.T=0.5", "synthesize") == EXIT_SHORT_SEASON


def test_certify_exit_codes(run):
    assert run(*FAST_GAME, "certify", "--kind", "coop") == EXIT_INVADABLE
    report = _summary(run.out / "certify-coop" / "invasion_report.json")
    assert report["verdict"] == "invadable"
    assert report["delta_J"] > 0

    assert run(*FAST_GAME, "certify", "--kind", "ess") == EXIT_OK
    schedules = pd.read_csv(run.out / "certify-ess" / "schedules.csv")
    assert list(schedules.columns) == ["t", "u_resident", "u_mutant_br"]
    print("✓ certify: coop invadable, ESS uninvadable")


def test_simulate_writes_trajectory(run):
    assert run("--set", "integrator.step_divisor=4000", "simulate", "--kind", "ess") == EXIT_OK
    out = run.out / "simulate-ess"
    trajectory = pd.read_csv(out / "trajectory_ess.csv")
    assert list(trajectory.columns) == ["t", "x", "u", "lambda", "mu", "sigma", "p", "n"]
    assert trajectory["t"].iloc[-1] == pytest.approx(2.0)
    summary = _summary(out / "summary.json")
    assert summary["ratio_error"] <= 1e-8
    assert summary["junctions"]


def test_oracle_compare(run):
    grid = ["--set", "oracle.t_steps=200", "--set", "oracle.x_steps=200",
            "--set", "integrator.step_divisor=4000"]
    assert run(*grid, "oracle", "--compare") == EXIT_OK
    out = run.out / "oracle-coop"
    summary = _summary(out / "summary.json")
    assert "max_rel_error" in summary
    assert len(summary["probes"]) == 5
    compare = pd.read_csv(out / "compare_coop.csv")
    assert list(compare.columns) == ["x", "oracle", "field", "rel_error"]
    values = pd.read_csv(out / "value_grid.csv")
    assert len(values) == 201 * 200


def test_reduce_with_values(run):
    grid = ["--set", "oracle.t_steps=50", "--set", "oracle.x_steps=100",
            "--set", "oracle.full_t_steps=10", "--set", "oracle.full_p_steps=21",
            "--set", "oracle.full_n_steps=21", "--set", "integrator.step_divisor=2000"]
    assert run(*grid, "reduce", "--values") == EXIT_OK
    report = _summary(run.out / "reduce" / "reduction_report.json")
    assert report["passed"] is True
    assert report["commutes"]["payoff_gap"] <= 1e-9
    assert len(report["value_checks"]) == 3


def test_reduce_check_only(run):
    assert run("reduce", "--check") == EXIT_OK
    report = _summary(run.out / "reduce" / "reduction_report.json")
    assert report["passed"] is True
    assert "commutes" not in report

    assert run("reduce", "--check", "--reward-power", "2") == EXIT_CONFIG
    report = _summary(run.out / "reduce" / "reduction_report.json")
    assert report["passed"] is False
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert failed == {"L"}
    print("✓ reduce --check stops after the homogeneity checks")


def test_popsim_constant_target(run):
    args = ["--set", "population.N=200", "--set", "population.tau_divisor=100",
            "--set", "population.seeds=2", "--set", "population.target_u=0.3"]
    assert run(*args, "popsim", "--mode", "fixed-split") == EXIT_OK
    out = run.out / "popsim-fixed-split"
    table = pd.read_csv(out / "population.csv")
    assert list(table.columns) == ["tau", "N", "seed", "F", "J_agg", "gap"]
    assert list(table["seed"]) == [0, 1]
    summary = _summary(out / "summary.json")
    assert summary["mode"] == "fixed-split"
    assert summary["u_mean"] == pytest.approx(0.3)


def test_configuration_errors(run, tmp_path):
    assert run("--set", "model.z=1", "synthesize") == EXIT_CONFIG
    assert run("--set", "model.a=-1", "synthesize") == EXIT_CONFIG
    assert run("--set", "population.mode=sometimes", "popsim") == EXIT_CONFIG
    assert main(["--config", str(tmp_path / "missing.json"), "synthesize"]) == EXIT_CONFIG

    broken = tmp_path / "broken.json"
    broken.write_text("{\"model\": {\"a\": 1.0,}}", encoding="utf-8")
    assert main(["--config", str(broken), "--quiet", "synthesize"]) == EXIT_CONFIG


def test_usage_errors_exit_through_argparse(run):
    with pytest.raises(SystemExit) as info:
        run("synthesize", "--kind", "selfish")
    assert info.value.code == 2


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
