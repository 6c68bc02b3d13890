#!/usr/bin/env python3
"""
Tests for the mutant game
Exact mutant evaluator, payoff gradient, switching values on the arcs and
the invasion verdicts of both fields.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.errors import ConfigurationError
from modules.field_synthesis import FieldKind, build_field
from modules.model_core import ControlSchedule, ModelParams
from modules.mutant_game import (
    MutantEvaluator,
    MutantGame,
    Verdict,
    mutant_adjoint_sweep,
    mutant_payoff,
    mutant_switching_along,
    responses_unique,
    rollout_resident,
)

BASELINE = ModelParams(a=1.0, b=1.0, c=2.0, T=2.0)
GAME_CONFIG = {
    "game": {"segments": 400, "max_iterations": 2000, "gradient_tol": 1e-6,
             "cert_tolerance": 1e-3, "dp_x_nodes": 201, "dp_x_max_factor": 1.5, "dp_controls": 21},
    "integrator": {"step_divisor": 4000},
}


def _resident(kind, x0=0.3):
    return rollout_resident(build_field(kind, BASELINE), x0, 1.0, BASELINE, step=BASELINE.T / 4000)


@pytest.mark.parametrize("kind", [FieldKind.COOPERATIVE, FieldKind.ESS])
def test_copying_mutant_is_neutral(kind):
    ctx = _resident(kind)
    copy = ctx.copy_schedule()
    first = mutant_payoff(ctx, copy, float(ctx.x[0]), BASELINE)
    second = mutant_adjoint_sweep(ctx, copy, BASELINE).payoff
    assert first == second
    assert abs(first - ctx.J) <= 1e-6 * ctx.J
    print(f"✓ {kind.value}: copying mutant earns {first:.10f} against J={ctx.J:.10f}")


def test_evaluator_gradient_matches_finite_differences():
    ctx = _resident(FieldKind.ESS)
    schedule = ctx.segment_schedule(20)
    evaluator = MutantEvaluator(ctx, schedule.edges, BASELINE)
    rng = np.random.default_rng(5)
    values = rng.uniform(0.1, 0.9, 20)
    sweep = evaluator.evaluate(values, 0.3)
    eps = 1e-5
    for k in range(20):
        up, down = values.copy(), values.copy()
        up[k] += eps
        down[k] -= eps
        fd = (evaluator.evaluate(up, 0.3).payoff - evaluator.evaluate(down, 0.3).payoff) / (2 * eps)
        assert sweep.gradient[k] == pytest.approx(fd, abs=1e-8)
    print("✓ Payoff gradient agrees with central differences")


def test_evaluator_rejects_mismatched_schedules():
    ctx = _resident(FieldKind.ESS)
    with pytest.raises(ConfigurationError):
        MutantEvaluator(ctx, np.linspace(0.0, 1.0, 5), BASELINE)
    with pytest.raises(ConfigurationError):
        mutant_payoff(ctx, ctx.segment_schedule(4), -0.1, BASELINE)


@pytest.mark.parametrize("kind", [FieldKind.COOPERATIVE, FieldKind.ESS])
def test_mutant_switching_matches_resident_adjoints(kind):
    ctx = _resident(kind)
    t, sigma_m, shifted = mutant_switching_along(ctx, BASELINE)
    assert t.size == ctx.t.size
    assert np.max(np.abs(sigma_m - shifted)) <= 1e-5

    u = ctx.record.u
    on_arc = (u > 1e-6) & (u < 1.0 - 1e-6) & (t < BASELINE.t_hat - 0.05)
    assert np.count_nonzero(on_arc) > 100
    if kind is FieldKind.COOPERATIVE:
        assert np.all(sigma_m[on_arc] > 0)
    else:
        assert np.max(np.abs(sigma_m[on_arc])) <= 1e-3
    print(f"✓ {kind.value}: copying-mutant sigma_m tracks sigma + c*mu along the rollout")


def test_mutant_switching_needs_adjoints():
    ctx = _resident(FieldKind.ESS)
    ctx.record.mu = np.full_like(ctx.t, np.nan)
    with pytest.raises(ConfigurationError):
        mutant_switching_along(ctx, BASELINE)


def test_responses_unique():
    edges = np.linspace(0.0, 2.0, 201)
    base = ControlSchedule(edges, np.full(200, 0.4))
    shifted = base.values.copy()
    shifted[:59] = 0.0
    apart = ControlSchedule(edges, shifted)
    close = ControlSchedule(edges, base.values + 1e-3)
    assert apart.l1_distance(base) == pytest.approx(0.236)
    assert not responses_unique([(base, 1.0), (apart, 1.0 - 1e-4)], 1.0, 1e-3, 0.02)
    assert responses_unique([(base, 1.0), (apart, 0.9)], 1.0, 1e-3, 0.02)
    assert responses_unique([(base, 1.0), (close, 1.0)], 1.0, 1e-3, 0.02)
    print("✓ Near-equal payoffs with distant schedules are flagged as not unique")


def test_unknown_best_response_method():
    game = MutantGame(GAME_CONFIG, BASELINE)
    with pytest.raises(ConfigurationError):
        game.best_response(_resident(FieldKind.ESS), method="newton")


@pytest.mark.parametrize("kind", [FieldKind.COOPERATIVE, FieldKind.ESS])
def test_gradient_and_dp_responses_agree(kind):
    ctx = _resident(kind)
    game = MutantGame(GAME_CONFIG, BASELINE)
    grad = game.best_response(ctx, "gradient")
    dp = game.best_response(ctx, "dp")
    assert grad.payoff == pytest.approx(dp.payoff, rel=5e-3)
    print(f"✓ {kind.value}: gradient J_m={grad.payoff:.6f}, DP J_m={dp.payoff:.6f}")


def test_cooperative_best_response_feeds_before_t_hat():
    ctx = _resident(FieldKind.COOPERATIVE)
    response = MutantGame(GAME_CONFIG, BASELINE).best_response(ctx)
    schedule = response.schedule
    before = schedule.edges[1:] <= BASELINE.t_hat - 0.05
    assert np.count_nonzero(before) > 200
    assert np.all(schedule.values[before] >= 0.999)
    print(f"✓ Mutant feeds on all {np.count_nonzero(before)} segments ahead of t_hat")


@pytest.mark.parametrize("kind", [FieldKind.COOPERATIVE, FieldKind.ESS])
def test_short_season_best_response_switches_once(kind):
    short = ModelParams(a=1.0, b=1.0, c=2.0, T=0.6)
    field = build_field(kind, short, allow_short_season=True)
    ctx = rollout_resident(field, 0.3, 1.0, short, step=short.T / 4000)
    response = MutantGame(GAME_CONFIG, short).best_response(ctx)
    assert response.schedule.switch_count() <= 1
    print(f"✓ {kind.value}: short-season best response switches {response.schedule.switch_count()} time(s)")


def test_cooperative_optimum_is_invadable():
    game = MutantGame(GAME_CONFIG, BASELINE)
    report = game.certify(build_field(FieldKind.COOPERATIVE, BASELINE), 0.3, 1.0)
    assert report.verdict is Verdict.INVADABLE
    assert report.delta_J > 10 * 1e-3 * report.J
    assert report.sigma_m_max > 0
    print(f"✓ Cooperative field invaded with delta_J={report.delta_J:.4e}")


@pytest.mark.parametrize("x0", [0.1, 0.3, 0.6])
def test_ess_is_uninvadable(x0):
    game = MutantGame(GAME_CONFIG, BASELINE)
    report = game.certify(build_field(FieldKind.ESS, BASELINE), x0, 1.0)
    assert report.verdict is Verdict.UNINVADABLE
    assert report.delta_J <= 1e-3 * report.J
    summary = report.as_dict()
    assert summary["verdict"] == "uninvadable"
    assert isinstance(report.best_response, ControlSchedule)
    assert report.l1_distance <= 1e-2 * BASELINE.T
    assert report.switching_gap <= 1e-5
    assert summary["dp_l1_distance"] == report.dp_l1_distance
    near = report.J_m - report.dp_payoff <= 1e-3 * report.J
    if near and report.dp_l1_distance > 1e-2 * BASELINE.T:
        assert report.unique is False
    print(f"✓ ESS from x0={x0}: delta_J/J={report.delta_J / report.J:.2e}, "
          f"L1 gradient {report.l1_distance:.2e}, DP {report.dp_l1_distance:.2e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
