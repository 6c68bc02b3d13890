"""
Field Rollout
Forward simulation of a feedback field with exact junction placement, the
backward adjoint sweep along a rollout, and a vectorised reduced-value
simulator used for value-by-simulation grids.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, DivergenceError, InvalidStateError
from .field_synthesis import COAST, FEED, SINGULAR, FieldKind, StrategyField
from .model_core import (
    ModelParams,
    ResidentState,
    TrajectoryRecord,
    arc_u0,
    arc_u1,
    phi1,
    rk4_step,
    step_grid,
)

logger = logging.getLogger(__name__)


def _augmented_rhs(params: ModelParams):
    a, b, c = params.a, params.b, params.c

    def rhs(t, y, u):
        p, n, x, _ = y
        return np.array([-a * p + b * n * u, -c * n * u, -a * x + (b + c * x) * u, (1.0 - u) * p])

    return rhs


def _singular_step(rhs, t, y, h, field: StrategyField):
    """RK4 step with the singular feedback evaluated at each stage state."""
    u1 = field.singular_control(y[2])
    k1 = rhs(t, y, u1)
    y2 = y + 0.5 * h * k1
    u2 = field.singular_control(y2[2])
    k2 = rhs(t + 0.5 * h, y2, u2)
    y3 = y + 0.5 * h * k2
    u3 = field.singular_control(y3[2])
    k3 = rhs(t + 0.5 * h, y3, u3)
    y4 = y + h * k3
    u4 = field.singular_control(y4[2])
    k4 = rhs(t + h, y4, u4)
    y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y_new, (u1, 0.5 * (u2 + u3), u4)


def rollout_field(field: StrategyField, initial: ResidentState, step: Optional[float] = None,
                  t0: float = 0.0) -> TrajectoryRecord:
    """Integrate (p, n, x, J) under the field's feedback from t0 to T.

    Arrivals on the boundary curve are located with brentq and get their own
    sample; the rest of the samples sit on the uniform step grid.
    """
    initial.check()
    params = field.params
    step = params.default_step if step is None else step
    breaks = [params.t_hat] if field.has_arc and t0 < params.t_hat else []
    grid = step_grid(t0, params.T, step, breaks)
    rhs = _augmented_rhs(params)

    t = t0
    y = np.array([initial.p, initial.n, initial.x, 0.0])
    times, states, controls, stages = [t], [y], [], []
    junctions = []
    drift_warned = False
    j = 1
    while j < grid.size:
        tb = grid[j]
        h = tb - t
        regime = field.regime(t, y[2])
        if regime == SINGULAR:
            y_new, stage = _singular_step(rhs, t, y, h, field)
            gap = abs(y_new[2] - field.boundary(tb))
            if gap > field.band and not drift_warned:
                logger.warning(f"Rollout left the singular band at t={tb:.6f} (gap {gap:.3e})")
                drift_warned = True
        else:
            u = 1.0 if regime == FEED else 0.0
            stage = (u, u, u)
            y_new = rk4_step(rhs, t, y, h, stage)
            gap0 = y[2] - field.boundary(t)
            gap1 = y_new[2] - field.boundary(tb)
            crossed = (regime == FEED and gap1 >= 0) or (regime == COAST and gap0 > 0 and gap1 <= 0)
            if crossed:
                s = brentq(lambda s: rk4_step(rhs, t, y, s, stage)[2] - field.boundary(t + s),
                           0.0, h, xtol=1e-15, rtol=4 * np.finfo(float).eps)
                if 1e-12 * step < s < h * (1.0 - 1e-12):
                    y_new = rk4_step(rhs, t, y, s, stage)
                    tb = t + s
                    junctions.append((float(tb), "arrival"))
                    logger.debug(f"Boundary reached at t={tb:.9f}, x={y_new[2]:.9f}")
                    j -= 1  # revisit the same grid node from the junction
        if not np.all(np.isfinite(y_new)):
            raise DivergenceError(tb)
        if y_new[1] <= 0:
            raise InvalidStateError(f"resource left the positive half-line at t={tb:.6g}")
        controls.append(stage[0])
        stages.append(stage)
        times.append(tb)
        states.append(y_new)
        t, y = tb, y_new
        j += 1

    states = np.array(states)
    u_nodes = np.array(controls + [stages[-1][2] if stages else 0.0])
    record = TrajectoryRecord(
        t=np.array(times), x=states[:, 2], u=u_nodes, p=states[:, 0], n=states[:, 1],
        payoff=float(states[-1, 3]), junctions=junctions, stage_u=np.array(stages).reshape(-1, 3),
    )
    logger.debug(f"Rollout of {field.kind.value} field from x={initial.x:.6f}: J={record.payoff:.10f}")
    return record


def adjoint_sweep(record: TrajectoryRecord, params: ModelParams) -> TrajectoryRecord:
    """Backward RK4 for lambda and mu from zero terminal values; fills lam, mu and sigma."""
    if record.stage_u is None:
        raise ConfigurationError("adjoint sweep needs the per-step stage controls of the rollout")
    if abs(record.t[-1] - params.T) > 1e-9 * params.T:
        raise ConfigurationError("adjoint sweep needs a rollout that ends at T")
    a, b, c = params.a, params.b, params.c

    def rhs(t, y, u):
        lam, mu = y
        return np.array([a * lam - 1.0 + u, (c * mu - b * lam) * u])

    size = record.t.size
    adj = np.zeros((size, 2))
    y = np.zeros(2)
    for k in range(size - 2, -1, -1):
        h = record.t[k] - record.t[k + 1]
        u_start, u_mid, u_end = record.stage_u[k]
        y = rk4_step(rhs, record.t[k + 1], y, h, (u_end, u_mid, u_start))
        adj[k] = y
    record.lam = adj[:, 0]
    record.mu = adj[:, 1]
    record.sigma = b * record.lam - c * record.mu - record.x
    return record


def check_sigma_signs(record: TrajectoryRecord, kind, params: ModelParams,
                      tol: float = 1e-6) -> Dict[str, float]:
    """Count nodes whose control disagrees with the sign of the switching value.

    The cooperative field is checked against the resident value sigma; the
    ESS field against the copying mutant value sigma_m = b*lam - x.
    """
    kind = FieldKind(kind)
    value = record.sigma if kind is FieldKind.COOPERATIVE else params.b * record.lam - record.x
    u = record.u[:-1]
    v = value[:-1]
    feed = u >= 1.0 - 1e-12
    coast = u <= 1e-12
    interior = ~(feed | coast)
    bad_feed = int(np.count_nonzero(feed & (v < -tol)))
    bad_coast = int(np.count_nonzero(coast & (v > tol)))
    singular_max = float(np.max(np.abs(v[interior]))) if np.any(interior) else 0.0
    return {
        "nodes": int(v.size),
        "feed_violations": bad_feed,
        "coast_violations": bad_coast,
        "singular_nodes": int(np.count_nonzero(interior)),
        "singular_max_abs": singular_max,
    }


# ---------------------------------------------------------------------------
# Vectorised reduced-value simulator
# ---------------------------------------------------------------------------

def _bang_advance(x, D, u, s, params: ModelParams):
    """Closed-form advance of (x, D, reward) over duration s with u in {0, 1}."""
    feed = u > 0.5
    x_new = np.where(feed, arc_u1(s, 0.0, x, params), arc_u0(s, 0.0, x, params))
    D_new = np.where(feed, D * np.exp(-params.c * s), D)
    reward = np.where(feed, 0.0, x * D * s * phi1(-params.a * s))
    return x_new, D_new, reward


def _arc_advance(field: StrategyField, t0, t1, D):
    """Advance the discount and reward along the boundary curve between t0 and t1."""
    c = field.params.c
    h = t1 - t0
    tm = 0.5 * (t0 + t1)
    x0, xm, x1 = field.boundary(t0), field.boundary(tm), field.boundary(t1)
    u0, um, u1 = field.singular_control(x0), field.singular_control(xm), field.singular_control(x1)
    D_mid = D * np.exp(-c * h * (5.0 * u0 + 8.0 * um - u1) / 24.0)
    D_new = D * np.exp(-c * h * (u0 + 4.0 * um + u1) / 6.0)
    reward = h / 6.0 * ((1.0 - u0) * x0 * D + 4.0 * (1.0 - um) * xm * D_mid + (1.0 - u1) * x1 * D_new)
    return x1, D_new, reward


def _locate_crossing(field: StrategyField, ta, x, u, h, g0, g1, iterations: int = 40):
    """Illinois regula falsi for the first time the bang arc meets the boundary."""
    params = field.params
    lo = np.zeros_like(x)
    hi = np.full_like(x, h)
    f_lo, f_hi = g0.copy(), g1.copy()
    side = np.zeros(x.shape, dtype=int)
    s = hi.copy()
    for _ in range(iterations):
        denom = f_hi - f_lo
        s = np.where(denom != 0, hi - f_hi * (hi - lo) / np.where(denom != 0, denom, 1.0), 0.5 * (lo + hi))
        s = np.clip(s, lo, hi)
        xs, _, _ = _bang_advance(x, np.ones_like(x), u, s, params)
        fs = xs - field.boundary(ta + s)
        left = np.sign(fs) == np.sign(f_lo)
        lo = np.where(left, s, lo)
        f_lo = np.where(left, fs, np.where(side == -1, 0.5 * f_lo, f_lo))
        hi = np.where(left, hi, s)
        f_hi = np.where(left, np.where(side == 1, 0.5 * f_hi, f_hi), fs)
        side = np.where(left, 1, -1)
        if np.all(np.abs(fs) <= 1e-14) or np.all(hi - lo <= 1e-15):
            break
    return s


def reduced_value_grid(field: StrategyField, t_nodes: np.ndarray, x_nodes: np.ndarray,
                       substeps: int = 20) -> np.ndarray:
    """V[i, j] = reduced payoff of the field's rollout started at (t_nodes[i], x_nodes[j]).

    All rollouts share a fine time grid made of `substeps` steps per t-node
    interval plus t_hat; each rollout joins at its start node. Bang arcs use
    the closed forms, the singular arc is followed exactly along the boundary.
    """
    params = field.params
    t_nodes = np.asarray(t_nodes, dtype=float)
    x_nodes = np.asarray(x_nodes, dtype=float)
    if np.any(np.diff(t_nodes) <= 0) or t_nodes[-1] > params.T + 1e-12:
        raise ConfigurationError("t_nodes must be increasing inside [0, T]")
    pieces = [np.linspace(t_nodes[i], t_nodes[i + 1], substeps + 1)[:-1] for i in range(t_nodes.size - 1)]
    tail = np.linspace(t_nodes[-1], params.T, substeps + 1) if t_nodes[-1] < params.T else np.array([params.T])
    fine = np.concatenate(pieces + [tail])
    if field.has_arc:
        fine = np.union1d(fine, [params.t_hat])
    fine = np.unique(fine)
    start = np.searchsorted(fine, t_nodes - 1e-12)

    nt, nx = t_nodes.size, x_nodes.size
    x = np.tile(x_nodes, nt)
    begin = np.repeat(start, nx)
    D = np.ones_like(x)
    value = np.zeros_like(x)
    on_arc = np.zeros(x.shape, dtype=bool)
    split = field.split_time
    band = field.band

    for k in range(fine.size - 1):
        ta, tb = fine[k], fine[k + 1]
        h = tb - ta
        active = begin <= k
        if not np.any(active):
            continue
        xb = field.boundary(ta)
        gap = x - xb
        if ta < split:
            join = active & ~on_arc & (np.abs(gap) <= band)
            on_arc |= join
            x = np.where(join, xb, x)
        else:
            on_arc[:] = False
        free = active & ~on_arc
        u = np.where(gap < -band, 1.0, 0.0)

        x_new, D_new, gain = _bang_advance(x, D, u, h, params)
        g1 = x_new - field.boundary(tb)
        crossed = free & (((u > 0.5) & (g1 >= 0)) | ((u < 0.5) & (gap > 0) & (g1 <= 0)))

        if np.any(crossed):
            idx = np.nonzero(crossed)[0]
            s = _locate_crossing(field, ta, x[idx], u[idx], h, gap[idx], g1[idx])
            xc, Dc, gc = _bang_advance(x[idx], D[idx], u[idx], s, params)
            tc = ta + s
            xc = field.boundary(tc)
            rest = h - s
            to_arc = tc < split
            xa, Da, ga = _arc_advance(field, tc, np.full_like(tc, tb), Dc)
            xo, Do, go = _bang_advance(xc, Dc, np.zeros_like(xc), rest, params)
            x_new[idx] = np.where(to_arc, xa, xo)
            D_new[idx] = np.where(to_arc, Da, Do)
            gain[idx] = gc + np.where(to_arc, ga, go)
            on_arc[idx] = to_arc

        arc_now = active & on_arc & ~crossed
        if np.any(arc_now):
            xa, Da, ga = _arc_advance(field, ta, tb, D[arc_now])
            x_new[arc_now] = xa
            D_new[arc_now] = Da
            gain[arc_now] = ga

        x = np.where(active, x_new, x)
        D = np.where(active, D_new, D)
        value = np.where(active, value + gain, value)

    if not np.all(np.isfinite(value)):
        raise DivergenceError(params.T, "reduced value grid")
    return value.reshape(nt, nx)
