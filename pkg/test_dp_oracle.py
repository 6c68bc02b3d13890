#!/usr/bin/env python3
"""
Tests for the DP oracle
Backward induction on the reduced and full grids against the synthesized
cooperative field.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from modules.dp_oracle import (
    FullGridSpec,
    PolicyBoundary,
    ReducedGridSpec,
    bang_fraction_after_junction,
    boundary_controls,
    coast_fraction_above_switch_line,
    compare_boundary,
    compare_with_field,
    control_mesh,
    extract_policy_boundary,
    minimum_x_max,
    refinement_study,
    solve_full,
    solve_reduced,
)
from modules.errors import ConfigurationError
from modules.field_synthesis import FieldKind, build_field, coop_singular_control
from modules.model_core import ModelParams

BASELINE = ModelParams(a=1.0, b=1.0, c=2.0, T=2.0)
SAMPLE_X = [0.1, 0.2, 0.3, 0.45, 0.6]


@pytest.fixture(scope="module")
def oracle():
    return solve_reduced(BASELINE, ReducedGridSpec(t_steps=2000, x_steps=2000), control_mesh(21))


def test_control_mesh_and_grid_validation():
    mesh = control_mesh()
    assert mesh[0] == 0.0 and mesh[-1] == 1.0 and mesh.size == 21
    with pytest.raises(ConfigurationError):
        control_mesh(10)
    with pytest.raises(ConfigurationError):
        solve_reduced(BASELINE, ReducedGridSpec(t_steps=10, x_steps=10), [0.2, 1.0])
    with pytest.raises(ConfigurationError):
        ReducedGridSpec(t_steps=0, x_steps=10).axes(BASELINE)
    with pytest.raises(ConfigurationError):
        ReducedGridSpec(t_steps=10, x_steps=10, interpolation="cubic").axes(BASELINE)
    assert minimum_x_max(BASELINE) == pytest.approx(1.05 * 0.25 * math.exp(2.0))


def test_terminal_row_and_value_dominance(oracle):
    assert np.all(oracle.values[-1] == 0.0)
    assert oracle.clamped == 0
    for x0 in (0.1, 0.3, 0.6):
        coasting = x0 * (1.0 - math.exp(-BASELINE.a * BASELINE.T)) / BASELINE.a
        assert oracle.value_at(x0) >= coasting - 1e-3
        assert oracle.value_at(x0) >= -1e-12
    print("✓ Oracle dominates the all-coast and all-feed schedules")


def test_oracle_matches_cooperative_rollouts(oracle):
    field = build_field(FieldKind.COOPERATIVE, BASELINE)
    rows = compare_with_field(oracle, field, SAMPLE_X, step=BASELINE.T / 4000)
    for row in rows:
        assert row["rel_error"] <= 1e-3
    print(f"✓ Oracle vs field, worst relative error {max(r['rel_error'] for r in rows):.2e}")


def test_policy_boundary_follows_the_field(oracle):
    field = build_field(FieldKind.COOPERATIVE, BASELINE)
    boundary = extract_policy_boundary(oracle)
    # only the last row, where every control ties at x = 0, has no transition
    assert len(boundary.gaps) <= 1
    comparison = compare_boundary(oracle, boundary, field, cells=2.0)
    assert comparison.rows == boundary.t.size - len(boundary.gaps)
    assert comparison.fraction == 1.0
    assert comparison.max_cells <= 2.0
    assert comparison.windows == 10
    assert comparison.singular_mad <= 0.05
    assert bang_fraction_after_junction(oracle, BASELINE) >= 0.99
    assert coast_fraction_above_switch_line(oracle, BASELINE) >= 0.99
    print(f"✓ Empirical boundary within {comparison.max_cells:.2f} cells, "
          f"boundary control MAD {comparison.singular_mad:.2e}, node MAD {comparison.interior_mad:.2e}")


def test_boundary_motion_recovers_the_singular_control():
    field = build_field(FieldKind.COOPERATIVE, BASELINE)
    t = np.linspace(0.0, BASELINE.T, 2001)[:-1]
    dx = minimum_x_max(BASELINE) / 1999
    # the arc snapped up to the next grid node, as extract_policy_boundary reports it
    x = np.where(t < BASELINE.t_hat, np.ceil(field.boundary(t) / dx) * dx, np.nan)
    centres, implied = boundary_controls(PolicyBoundary(t=t, x=x), BASELINE, BASELINE.t_hat)
    assert centres.size == 10
    np.testing.assert_allclose(implied, coop_singular_control(centres, BASELINE), atol=1e-2)


def test_refinement_study_shrinks_changes():
    study = refinement_study(BASELINE, [100, 200, 400], [0.2, 0.45], control_mesh(21))
    assert study["sizes"] == [100, 200, 400]
    changes = np.array(study["changes"])
    assert changes.shape == (2, 2)
    assert study["monotone"] is True
    assert np.all(changes[1] <= changes[0])
    assert np.max(changes[-1]) <= 1e-2


def test_full_grid_agrees_with_reduced_grid():
    controls = control_mesh(21)
    full = solve_full(BASELINE, FullGridSpec(t_steps=40, p_steps=81, n_steps=121), controls)
    reduced = solve_reduced(BASELINE, ReducedGridSpec(t_steps=40, x_steps=400), controls)
    assert np.all(full.values[-1] == 0.0)
    for p, n in ((0.3, 1.0), (0.6, 2.0)):
        v_full = float(full.value_at(p, n)[0])
        v_reduced = n * float(reduced.value_at(p / n))
        assert v_full == pytest.approx(v_reduced, rel=5e-2)
    print("✓ Full and reduced oracles agree")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
