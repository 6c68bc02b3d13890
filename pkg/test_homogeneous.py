#!/usr/bin/env python3
"""
Tests for the homogeneous reduction
Homogeneity checks, the reduced problem of the consumer-resource model and
commutation of reduction with simulation.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.dp_oracle import FullGridSpec, ReducedGridSpec, control_mesh, solve_full, solve_reduced
from modules.errors import ConfigurationError
from modules.homogeneous import (
    HomogeneousProblem,
    check_homogeneity,
    consumer_resource_problem,
    hamiltonian_agreement,
    reduce,
    reduction_commutes,
    simulate_reduced,
    verify_value_homogeneity,
)
from modules.model_core import ControlSchedule, ModelParams

BASELINE = ModelParams(a=1.0, b=1.0, c=2.0, T=2.0)


def test_consumer_resource_problem_is_homogeneous():
    report = check_homogeneity(consumer_resource_problem(BASELINE), probes=200, seed=1)
    assert report.passed
    assert report.violators == []
    assert all(check.max_violation <= 1e-12 for check in report.checks)
    print("✓ Consumer-resource problem is homogeneous of degree one")


def test_squared_reward_is_flagged():
    prob = consumer_resource_problem(BASELINE, reward_power=2.0)
    report = check_homogeneity(prob, probes=50, seed=2)
    assert not report.passed
    assert report.violators == ["L"]
    with pytest.raises(ConfigurationError):
        reduce(prob, report)
    print("✓ Non-homogeneous reward is rejected")


def test_reduced_vector_field():
    reduced = reduce(consumer_resource_problem(BASELINE))
    assert reduced.dim == 1
    rng = np.random.default_rng(4)
    for _ in range(100):
        x, u = rng.uniform(0.0, 3.0), rng.uniform(0.0, 1.0)
        g = reduced.g(np.array([x]), u)[0]
        assert g == pytest.approx(-x + (1.0 + 2.0 * x) * u, abs=1e-12)
        assert reduced.rate(np.array([x]), u) == pytest.approx(-2.0 * u, abs=1e-15)
        assert reduced.L(np.array([x]), u) == pytest.approx((1.0 - u) * x, abs=1e-15)
    assert hamiltonian_agreement(reduced, BASELINE, probes=500, seed=3) <= 1e-12


def test_reduction_commutes_with_simulation():
    prob = consumer_resource_problem(BASELINE)
    reduced = reduce(prob)
    schedule = ControlSchedule.uniform([1.0, 0.5, 0.25, 0.0], 0.0, BASELINE.T)
    gaps = reduction_commutes(prob, reduced, [0.3, 1.0], schedule, step=1e-3)
    assert gaps["x_sup"] <= 1e-9
    assert gaps["scale_sup"] <= 1e-9
    assert gaps["payoff_gap"] <= 1e-9
    print(f"✓ Reduction commutes: payoff {gaps['full_payoff']:.10f}")


def test_reduced_payoff_scales_with_resource():
    reduced = reduce(consumer_resource_problem(BASELINE))
    schedule = ControlSchedule.uniform([1.0, 0.0], 0.0, BASELINE.T)
    run = simulate_reduced(reduced, [0.3], schedule, step=1e-3)
    assert run.log_scale[0] == 0.0
    assert run.log_scale[-1] == pytest.approx(-2.0, abs=1e-10)


def test_custom_problem_without_homogeneity():
    prob = HomogeneousProblem(
        dim=2,
        f=lambda y, u: np.array([-y[0] + u, -y[1] * u]),
        L=lambda y, u: y[0],
        K=lambda y: 0.0,
        manifold=lambda t, y: (t - 1.0) * y[-1],
        horizon=1.0,
        name="affine drive",
    )
    report = check_homogeneity(prob, probes=20, seed=0)
    assert report.violators == ["f[0]"]


def test_value_homogeneity_on_grids():
    prob = consumer_resource_problem(BASELINE)
    reduced = reduce(prob)
    controls = control_mesh(21)
    full = solve_full(BASELINE, FullGridSpec(t_steps=40, p_steps=81, n_steps=121), controls)
    red = solve_reduced(BASELINE, ReducedGridSpec(t_steps=40, x_steps=400), controls)
    result = verify_value_homogeneity(
        prob, reduced,
        full_value=lambda y: full.value_at(y[0], y[1])[0],
        reduced_value=lambda x: red.value_at(x[0]),
        probes=[(0.3, 1.0), (0.6, 2.0), (0.15, 0.5)],
    )
    assert len(result["checks"]) == 3
    assert result["max_rel_err"] <= 5e-2
    with pytest.raises(ConfigurationError):
        verify_value_homogeneity(prob, reduced, lambda y: 0.0, lambda x: 0.0, [(0.3, 0.0)])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
