#!/usr/bin/env python3
"""
Tests for the model core
Dynamics, closed-form arcs, exponential moments, the RK4 integrator and
the resident rollout under a field.
"""

import math
import os
import sys

import numpy as np
import pytest
from scipy import integrate as sp_integrate

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.errors import ConfigurationError, DivergenceError, InvalidParameterError, InvalidStateError
from modules.field_synthesis import FieldKind, build_field
from modules.model_core import (
    Control,
    ControlSchedule,
    ModelParams,
    MutantState,
    ResidentState,
    TrajectoryRecord,
    arc_u0,
    arc_u1,
    exp_moments,
    integrate,
    mutant_rhs,
    resident_rhs,
    resident_trajectory,
    step_grid,
)
from modules.mutant_game import rollout_resident

BASELINE = ModelParams(a=1.0, b=1.0, c=2.0, T=2.0)


def test_params_validation():
    with pytest.raises(InvalidParameterError):
        ModelParams(a=0.0, b=1.0, c=1.0, T=1.0)
    with pytest.raises(InvalidParameterError):
        ModelParams(a=1.0, b=float("nan"), c=1.0, T=1.0)
    with pytest.raises(InvalidParameterError):
        ModelParams.from_config({"a": 1.0, "b": 1.0, "c": 2.0})
    params = ModelParams.from_config({"a": 1, "b": 1, "c": 2, "T": 2})
    assert params == BASELINE
    print("✓ Parameter validation")


def test_junction_constants_and_threshold():
    assert BASELINE.t_hat == pytest.approx(2.0 - math.log(2.0), abs=1e-15)
    assert BASELINE.x_hat == 0.5
    assert BASELINE.long_season_threshold == pytest.approx(math.log(2.0) + math.log(1.5), abs=1e-12)
    assert BASELINE.long_season

    degenerate = ModelParams(a=1.0, b=1.0, c=1.0, T=2.0)
    assert degenerate.degenerate
    assert degenerate.long_season_threshold == pytest.approx(math.log(2.0) + 0.5, abs=1e-12)
    print("✓ Junction constants")


def test_resident_rhs_examples():
    assert resident_rhs(ResidentState(0.0, 1.0, 0.0), 0.0, BASELINE) == (0.0, 0.0, 0.0)
    dp, dn, dx = resident_rhs(ResidentState.from_pn(0.5, 1.0), Control(1.0), BASELINE)
    assert (dp, dn, dx) == pytest.approx((0.5, -2.0, 1.5), abs=1e-15)
    with pytest.raises(InvalidStateError):
        ResidentState.from_pn(0.5, 0.0)
    with pytest.raises(InvalidStateError):
        Control(1.5)
    print("✓ Resident dynamics examples")


def test_ratio_dynamics_match_quotient_rule():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        s = ResidentState.from_pn(rng.uniform(0.0, 3.0), rng.uniform(0.05, 3.0))
        u = rng.uniform(0.0, 1.0)
        dp, dn, dx = resident_rhs(s, u, BASELINE)
        assert dx == pytest.approx((dp * s.n - s.p * dn) / s.n ** 2, rel=1e-12, abs=1e-12)
    print("✓ dx/dt agrees with the quotient rule")


def test_mutant_rhs():
    dp_m, dx_m = mutant_rhs(MutantState(0.5, 0.5), 1.0, 0.0, 1.0, BASELINE)
    assert (dp_m, dx_m) == pytest.approx((0.5, 0.5), abs=1e-15)

    # a copying mutant shares the resident ratio dynamics
    s = ResidentState.from_pn(0.4, 0.8)
    _, _, dx = resident_rhs(s, 0.3, BASELINE)
    _, dx_m = mutant_rhs(MutantState(s.p, s.x), 0.3, 0.3, s.n, BASELINE)
    assert dx_m == pytest.approx(dx, abs=1e-15)
    with pytest.raises(InvalidStateError):
        mutant_rhs(MutantState(0.5, 0.5), 1.0, 0.0, 0.0, BASELINE)
    print("✓ Mutant dynamics")


def test_closed_form_arcs():
    assert arc_u0(2.0 - math.log(2.0), 2.0, 0.25, BASELINE) == pytest.approx(0.5, abs=1e-14)
    assert arc_u1(0.0, 1.0, 0.5, BASELINE) == pytest.approx(1.5 * math.exp(-1.0) - 1.0, abs=1e-14)

    degenerate = ModelParams(a=1.0, b=1.0, c=1.0, T=2.0)
    assert arc_u1(0.9, 1.0, 0.5, degenerate) == pytest.approx(0.4, abs=1e-14)
    print("✓ Closed-form arcs")


def test_closed_form_arcs_match_integration():
    a, b, c = BASELINE.a, BASELINE.b, BASELINE.c
    coast = integrate(lambda t, y, u: np.array([-a * y[0]]), [0.7], 0.0, 2.0, 0.0, 1e-3)
    assert coast.y[-1, 0] == pytest.approx(arc_u0(2.0, 0.0, 0.7, BASELINE), abs=1e-10)

    feed = integrate(lambda t, y, u: np.array([-a * y[0] + (b + c * y[0])]), [0.5], 1.0, 0.0, 1.0, 1e-3)
    assert feed.t[-1] == 0.0
    assert feed.y[-1, 0] == pytest.approx(arc_u1(0.0, 1.0, 0.5, BASELINE), abs=1e-10)
    print("✓ Closed forms agree with RK4")


@pytest.mark.parametrize("kappa", [0.0, 1.0 - 1e-6, 1.0, 2.0])
def test_exp_moments_against_quadrature(kappa):
    a, h = 1.0, 0.3
    A, I, B = exp_moments(a, kappa, h)
    opts = {"epsabs": 1e-14, "epsrel": 1e-13}
    A_ref = sp_integrate.quad(lambda s: math.exp(-a * s), 0.0, h, **opts)[0]
    I_ref = sp_integrate.quad(lambda r: math.exp(-a * (h - r) - kappa * r), 0.0, h, **opts)[0]
    B_ref = sp_integrate.dblquad(lambda r, s: math.exp(-a * (s - r) - kappa * r), 0.0, h,
                                 0.0, lambda s: s, **opts)[0]
    assert float(A) == pytest.approx(A_ref, rel=1e-10)
    assert float(I) == pytest.approx(I_ref, rel=1e-10)
    assert float(B) == pytest.approx(B_ref, rel=1e-9)


def test_step_grid():
    with pytest.raises(ConfigurationError):
        step_grid(0.0, 1.0, 2.0)
    nodes = step_grid(0.0, 1.0, 0.3, breakpoints=[0.5])
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert 0.5 in nodes
    assert np.all(np.diff(nodes) > 0)

    backward = step_grid(1.0, 0.0, 0.25)
    assert np.allclose(backward, [1.0, 0.75, 0.5, 0.25, 0.0])
    print("✓ Step grid")


def test_control_schedule():
    zero = ControlSchedule.constant(0.0, 0.0, 2.0)
    one = ControlSchedule.constant(1.0, 0.0, 2.0)
    assert zero.l1_distance(one) == pytest.approx(2.0)

    steps = ControlSchedule.uniform([1.0, 0.5, 0.0], 0.0, 3.0)
    assert np.allclose(steps(np.array([0.5, 1.5, 2.5])), [1.0, 0.5, 0.0])
    assert steps.switch_count() == 1
    with pytest.raises(ConfigurationError):
        ControlSchedule.uniform([1.2], 0.0, 1.0)
    print("✓ Control schedules")


def test_payoff_of_pure_coasting():
    record = resident_trajectory(ResidentState.from_pn(1.0, 1.0), 0.0, BASELINE, step=1e-3)
    assert record.payoff == pytest.approx(1.0 - math.exp(-2.0), abs=1e-8)
    assert record.p[-1] == pytest.approx(math.exp(-2.0), abs=1e-10)

    feeding = resident_trajectory(ResidentState.from_pn(1.0, 1.0), 1.0, BASELINE, step=1e-3)
    assert feeding.payoff == 0.0
    print("✓ Coasting and feeding payoffs")


def test_rollout_above_the_boundary_never_feeds():
    field = build_field(FieldKind.COOPERATIVE, BASELINE)
    ctx = rollout_resident(field, 5.0, 1.0, BASELINE, step=BASELINE.T / 4000)
    assert np.all(ctx.record.u == 0.0)
    assert ctx.J == pytest.approx(5.0 * (1.0 - math.exp(-2.0)), rel=1e-9)
    assert ctx.n[-1] == 1.0
    print(f"✓ Coasting rollout: J={ctx.J:.10f}, n(T)={ctx.n[-1]}")


@pytest.mark.parametrize("kind", [FieldKind.COOPERATIVE, FieldKind.ESS])
def test_feeding_rollout_depletes_the_resource(kind):
    field = build_field(kind, BASELINE)
    ctx = rollout_resident(field, 0.3, 1.0, BASELINE, step=BASELINE.T / 4000)
    assert np.any(ctx.record.u > 0)
    assert ctx.n[-1] < 1.0
    assert np.all(np.diff(ctx.n) <= 0)
    print(f"✓ {kind.value}: n(T)={ctx.n[-1]:.6f} after feeding")


def test_step_halving_and_ratio_consistency():
    schedule = ControlSchedule.uniform([1.0, 0.3, 0.0], 0.0, BASELINE.T)
    start = ResidentState.from_pn(0.3, 1.0)
    coarse = resident_trajectory(start, schedule, BASELINE, step=1e-3)
    fine = resident_trajectory(start, schedule, BASELINE, step=5e-4)
    assert abs(coarse.payoff - fine.payoff) <= 1e-9
    assert fine.ratio_error() <= 1e-8
    assert np.all(fine.n > 0) and np.all(fine.p >= 0)
    print(f"✓ Step halving changes J by {abs(coarse.payoff - fine.payoff):.2e}")


def test_payoff_is_additive_over_split_horizon():
    schedule = ControlSchedule.uniform([1.0, 0.5, 0.25, 0.0], 0.0, BASELINE.T)
    start = ResidentState.from_pn(0.3, 1.0)
    whole = resident_trajectory(start, schedule, BASELINE, step=1e-3)
    first = resident_trajectory(start, schedule, BASELINE, t1=1.0, step=1e-3)
    middle = ResidentState(float(first.p[-1]), float(first.n[-1]), float(first.x[-1]))
    second = resident_trajectory(middle, schedule, BASELINE, t0=1.0, step=1e-3)
    assert first.payoff + second.payoff == pytest.approx(whole.payoff, abs=1e-10)
    print("✓ Payoff additivity")


def test_divergence_is_reported_with_time():
    with pytest.raises(DivergenceError) as info:
        integrate(lambda t, y, u: np.array([np.inf]), [1.0], 0.0, 1.0, 0.0, 0.25)
    assert info.value.time == 0.25

    with pytest.raises(ConfigurationError):
        TrajectoryRecord(t=np.array([0.0, 0.0]), x=np.zeros(2), u=np.zeros(2),
                         p=np.zeros(2), n=np.ones(2), payoff=0.0)
    print("✓ Divergence and record validation")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
