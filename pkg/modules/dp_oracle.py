"""
DP Oracle
Brute-force backward induction for the reduced (t, x) problem and the full
(t, p, n) problem, used to check the synthesized fields.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator, RegularGridInterpolator

from .errors import ConfigurationError
from .field_rollout import rollout_field
from .field_synthesis import StrategyField, coop_singular_control, switch_line
from .model_core import ModelParams, ResidentState, arc_u0, arc_u1, exp_moments

logger = logging.getLogger(__name__)

INTERPOLATIONS = ("pchip", "linear")


@dataclass(frozen=True)
class ReducedGridSpec:
    t_steps: int = 2000
    x_steps: int = 2000
    x_max: Optional[float] = None
    interpolation: str = "pchip"

    def axes(self, params: ModelParams):
        x_max = self.x_max if self.x_max is not None else minimum_x_max(params)
        if self.t_steps < 1 or self.x_steps < 2:
            raise ConfigurationError("reduced grid needs t_steps >= 1 and x_steps >= 2")
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigurationError(f"interpolation must be one of {', '.join(INTERPOLATIONS)}")
        return np.linspace(0.0, params.T, self.t_steps + 1), np.linspace(0.0, x_max, self.x_steps)


@dataclass(frozen=True)
class FullGridSpec:
    t_steps: int = 60
    p_steps: int = 161
    n_steps: int = 121
    p_max: float = 2.5
    n_min: float = 0.005
    n_max: float = 2.5

    def axes(self, params: ModelParams):
        if self.t_steps < 1 or self.p_steps < 2 or self.n_steps < 2:
            raise ConfigurationError("full grid needs at least two nodes per state axis")
        return (np.linspace(0.0, params.T, self.t_steps + 1),
                np.linspace(0.0, self.p_max, self.p_steps),
                np.geomspace(self.n_min, self.n_max, self.n_steps))


def minimum_x_max(params: ModelParams) -> float:
    """Covers every start of a last-primary-type coasting arc, with 5% headroom."""
    return 1.05 * (params.b / (4.0 * params.a)) * np.exp(params.a * params.T)


def control_mesh(steps: int = 21) -> np.ndarray:
    if steps < 11:
        raise ConfigurationError("control mesh needs {0, 1} and at least 9 interior points")
    return np.linspace(0.0, 1.0, steps)


@dataclass
class ValueGrid:
    t: np.ndarray
    x: np.ndarray
    values: np.ndarray  # [t, x]
    policy: np.ndarray  # [t, x], last row undefined
    clamped: int = 0

    def value_at(self, x, row: int = 0):
        return np.interp(x, self.x, self.values[row])


@dataclass
class FullValueGrid:
    t: np.ndarray
    p: np.ndarray
    n: np.ndarray
    values: np.ndarray  # [t, p, n]
    clamped: int = 0

    def value_at(self, p, n, row: int = 0) -> np.ndarray:
        interp = RegularGridInterpolator((self.p, self.n), self.values[row], method="linear")
        pts = np.column_stack([np.atleast_1d(p), np.atleast_1d(n)])
        return interp(pts)


def _transport(x, u, h, params: ModelParams):
    if u == 0.0:
        return arc_u0(h, 0.0, x, params)
    if u == 1.0:
        return arc_u1(h, 0.0, x, params)
    a, b, c = params.a, params.b, params.c

    def f(y):
        return -a * y + (b + c * y) * u

    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_tables(x, controls, h, params: ModelParams):
    """Landing points, exact step rewards and discount factors for every control."""
    a, b, c = params.a, params.b, params.c
    targets = np.stack([_transport(x, u, h, params) for u in controls])
    A, _, B = exp_moments(a, c * controls, h)
    rewards = (1.0 - controls)[:, None] * (A * x[None, :] + (b * controls * B)[:, None])
    return targets, rewards, np.exp(-c * controls * h)


def _continuation(x, row, targets, method: str):
    inside = np.clip(targets, x[0], x[-1])
    if method == "linear":
        return np.interp(inside.ravel(), x, row).reshape(inside.shape)
    return PchipInterpolator(x, row, extrapolate=False)(inside)


def solve_reduced(params: ModelParams, grid_spec: ReducedGridSpec,
                  controls: Sequence[float]) -> ValueGrid:
    """Semi-Lagrangian backward induction for the reduced value.

    One step keeps u constant, moves x along the exact arc, collects the exact
    step reward (1-u) * int x e^{-c u s} ds and discounts the continuation by
    e^{-c u dt}. The continuation is read through a monotone cubic (PCHIP)
    interpolant, or a piecewise-linear one with `interpolation="linear"`.
    """
    controls = np.asarray(controls, dtype=float)
    if controls[0] != 0.0 or controls[-1] != 1.0 or np.any(np.diff(controls) <= 0):
        raise ConfigurationError("control mesh must be increasing from 0 to 1")
    t, x = grid_spec.axes(params)
    x_max = x[-1]
    nt = t.size
    cols = np.arange(x.size)
    values = np.zeros((nt, x.size))
    policy = np.zeros((nt, x.size))
    uniform = np.allclose(np.diff(t), t[1] - t[0])
    tables = _step_tables(x, controls, t[1] - t[0], params)
    clamped = 0

    for k in range(nt - 2, -1, -1):
        if not uniform:
            tables = _step_tables(x, controls, t[k + 1] - t[k], params)
        targets, rewards, discount = tables
        q = rewards + discount[:, None] * _continuation(x, values[k + 1], targets, grid_spec.interpolation)
        # first maximum wins, so ties go to the smaller control
        best = np.argmax(q, axis=0)
        values[k] = q[best, cols]
        policy[k] = controls[best]
        clamped += int(np.count_nonzero(targets[best, cols] > x_max * (1.0 + 1e-12)))
    policy[-1] = 0.0
    if clamped:
        logger.warning(f"Reduced DP clamped {clamped} argmax transitions at x_max={x_max:.4g}")
    logger.info(
        f"Reduced DP solved on {nt - 1}x{x.size} grid with {controls.size} controls "
        f"({grid_spec.interpolation} interpolation)"
    )
    return ValueGrid(t=t, x=x, values=values, policy=policy, clamped=clamped)


def solve_full(params: ModelParams, grid_spec: FullGridSpec, controls: Sequence[float]) -> FullValueGrid:
    """Backward induction on (p, n) with exact constant-control transport and reward."""
    controls = np.asarray(controls, dtype=float)
    t, p, n = grid_spec.axes(params)
    a, b, c = params.a, params.b, params.c
    P, N = np.meshgrid(p, n, indexing="ij")
    values = np.zeros((t.size, p.size, n.size))
    clamped = 0
    for k in range(t.size - 2, -1, -1):
        h = t[k + 1] - t[k]
        interp = RegularGridInterpolator((p, n), values[k + 1], method="linear")
        best = np.full(P.shape, -np.inf)
        out_of_grid = np.zeros(P.shape, dtype=bool)
        for u in controls:
            A, I, B = exp_moments(a, c * u, h)
            p_next = np.exp(-a * h) * P + b * u * N * I
            n_next = N * np.exp(-c * u * h)
            reward = (1.0 - u) * (A * P + b * u * N * B)
            outside = (p_next > p[-1]) | (n_next < n[0])
            pts = np.column_stack([np.clip(p_next, p[0], p[-1]).ravel(), np.clip(n_next, n[0], n[-1]).ravel()])
            q = reward + interp(pts).reshape(P.shape)
            better = q > best
            best = np.where(better, q, best)
            out_of_grid = np.where(better, outside, out_of_grid)
        clamped += int(np.count_nonzero(out_of_grid))
        values[k] = best
    if clamped:
        logger.warning(f"Full DP clamped {clamped} argmax transitions")
    logger.info(f"Full DP solved on {t.size - 1}x{p.size}x{n.size} grid")
    return FullValueGrid(t=t, p=p, n=n, values=values, clamped=clamped)


@dataclass
class PolicyBoundary:
    t: np.ndarray
    x: np.ndarray  # NaN where no transition was found
    gaps: List[float] = field(default_factory=list)


def extract_policy_boundary(vg: ValueGrid) -> PolicyBoundary:
    """First x where the argmax leaves u=1, scanning upward, for each time row."""
    rows = vg.t.size - 1
    xs = np.full(rows, np.nan)
    gaps = []
    for i in range(rows):
        feed = vg.policy[i] >= 1.0
        if not feed[0] or feed.all():
            gaps.append(float(vg.t[i]))
            continue
        j = int(np.argmin(feed))
        xs[i] = vg.x[j]
    if gaps:
        logger.debug(f"Policy boundary has {len(gaps)} rows without a feed-to-coast transition")
    return PolicyBoundary(t=vg.t[:-1].copy(), x=xs, gaps=gaps)


@dataclass
class BoundaryComparison:
    rows: int
    within: int
    max_cells: float
    interior_mad: float
    singular_mad: float = 0.0
    windows: int = 0

    @property
    def fraction(self) -> float:
        return self.within / self.rows if self.rows else 1.0


def boundary_controls(boundary: PolicyBoundary, params: ModelParams, t_stop: float,
                      window: Optional[int] = None):
    """Control that carries the empirical boundary along its own motion before t_stop.

    Each window of rows gets a least-squares line x(t); the control is
    (dx/dt + a x) / (b + c x) at the window centre.
    """
    keep = (boundary.t < t_stop) & ~np.isnan(boundary.x)
    t, x = boundary.t[keep], boundary.x[keep]
    if window is None:
        window = max(5, t.size // 10)
    centres, controls = [], []
    for start in range(0, t.size - window + 1, window):
        tw, xw = t[start:start + window], x[start:start + window]
        slope, level = np.polyfit(tw - tw.mean(), xw, 1)
        centres.append(level)
        controls.append((slope + params.a * level) / (params.b + params.c * level))
    return np.array(centres), np.array(controls)


def compare_boundary(vg: ValueGrid, boundary: PolicyBoundary, field: StrategyField,
                     cells: float = 2.0) -> BoundaryComparison:
    """Distance of the empirical boundary to the field's boundary curve, in grid cells.

    `interior_mad` averages |u - u_sing(x)| over the interior argmax nodes
    before the junction. Those nodes lie within one step of travel of the arc
    and hold the constant control that reaches it from their offset.
    `singular_mad` compares the control implied by the boundary's motion
    with u_sing at the boundary.
    """
    dx = vg.x[1] - vg.x[0]
    ok = ~np.isnan(boundary.x)
    analytic = field.boundary(boundary.t[ok])
    dist = np.abs(boundary.x[ok] - analytic) / dx
    within = int(np.count_nonzero(dist <= cells))

    mad = 0.0
    singular_mad = 0.0
    windows = 0
    if field.has_arc:
        early = vg.t[:-1] < field.params.t_hat
        pol = vg.policy[:-1][early]
        X = np.broadcast_to(vg.x, pol.shape)
        interior = (pol > 0.0) & (pol < 1.0)
        if np.any(interior):
            mad = float(np.mean(np.abs(pol[interior] - coop_singular_control(X[interior], field.params))))
        centres, implied = boundary_controls(boundary, field.params, field.params.t_hat)
        windows = int(centres.size)
        if windows:
            singular_mad = float(np.mean(np.abs(implied - coop_singular_control(centres, field.params))))
    return BoundaryComparison(rows=int(np.count_nonzero(ok)), within=within,
                              max_cells=float(dist.max()) if dist.size else 0.0, interior_mad=mad,
                              singular_mad=singular_mad, windows=windows)


def bang_fraction_after_junction(vg: ValueGrid, params: ModelParams) -> float:
    late = vg.t[:-1] > params.t_hat
    pol = vg.policy[:-1][late]
    if pol.size == 0:
        return 1.0
    return float(np.mean((pol == 0.0) | (pol == 1.0)))


def coast_fraction_above_switch_line(vg: ValueGrid, params: ModelParams) -> float:
    late = (vg.t[:-1] > params.t_hat) & (vg.t[:-1] < params.T)
    rows = np.nonzero(late)[0]
    above = []
    for i in rows:
        line = switch_line(vg.t[i], params)
        mask = vg.x > line
        above.append(vg.policy[i][mask] == 0.0)
    if not above:
        return 1.0
    flat = np.concatenate(above)
    return float(np.mean(flat)) if flat.size else 1.0


def compare_with_field(vg: ValueGrid, field: StrategyField, probes: Sequence[float],
                       step: Optional[float] = None) -> List[Dict[str, float]]:
    """Oracle value vs the field's rollout payoff per unit resource at each probe x."""
    rows = []
    for x0 in probes:
        oracle = float(vg.value_at(x0))
        rollout = rollout_field(field, ResidentState.from_pn(float(x0), 1.0), step=step).payoff
        rows.append({
            "x": float(x0),
            "oracle": oracle,
            "field": rollout,
            "rel_error": abs(oracle - rollout) / max(abs(rollout), 1e-300),
        })
    return rows


def refinement_study(params: ModelParams, sizes: Sequence[int], probes: Sequence[float],
                     controls: Sequence[float], interpolation: str = "pchip") -> Dict[str, Any]:
    """Value at the probes for successively doubled grids and the changes between them."""
    table = []
    for size in sizes:
        vg = solve_reduced(params, ReducedGridSpec(t_steps=size, x_steps=size, interpolation=interpolation), controls)
        table.append([float(v) for v in vg.value_at(np.asarray(probes))])
    values = np.array(table)
    changes = np.abs(np.diff(values, axis=0))
    monotone = bool(np.all(changes[1:] <= changes[:-1] + 1e-12)) if changes.shape[0] > 1 else True
    return {
        "sizes": [int(s) for s in sizes],
        "probes": [float(p) for p in probes],
        "values": values.tolist(),
        "changes": changes.tolist(),
        "monotone": monotone,
    }
