"""
Mutant Game
Rare-mutant payoffs against a frozen resident, best responses by projected
gradient ascent and by dynamic programming, and invasion certification.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .field_rollout import adjoint_sweep, rollout_field
from .field_synthesis import FieldKind, StrategyField
from .model_core import ControlSchedule, ModelParams, ResidentState, TrajectoryRecord, exp_moments, phi1


class Verdict(str, Enum):
    INVADABLE = "invadable"
    UNINVADABLE = "uninvadable"


@dataclass
class ResidentContext:
    """Realised resident history on the rollout grid, frozen for the mutant."""

    t: np.ndarray
    n: np.ndarray
    x: np.ndarray
    p: np.ndarray
    u_step: np.ndarray  # step-average resident control
    kappa: np.ndarray  # resource decay rate on each step
    J: float
    record: TrajectoryRecord
    kind: Optional[FieldKind] = None

    @classmethod
    def from_record(cls, record: TrajectoryRecord, params: ModelParams,
                    kind: Optional[FieldKind] = None) -> "ResidentContext":
        if record.stage_u is None:
            raise ConfigurationError("resident record carries no stage controls")
        h = np.diff(record.t)
        stages = record.stage_u
        u_step = (stages[:, 0] + 4.0 * stages[:, 1] + stages[:, 2]) / 6.0
        kappa = np.maximum(np.log(record.n[:-1] / record.n[1:]) / h, 0.0)
        return cls(t=record.t, n=record.n, x=record.x, p=record.p, u_step=u_step,
                   kappa=kappa, J=record.payoff, record=record, kind=kind)

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def step_index(self, times) -> np.ndarray:
        idx = np.searchsorted(self.t, times, side="right") - 1
        return np.clip(idx, 0, self.t.size - 2)

    def n_at(self, times) -> np.ndarray:
        """Resource between nodes, exponential within each step."""
        times = np.asarray(times, dtype=float)
        idx = self.step_index(times)
        return self.n[idx] * np.exp(-self.kappa[idx] * (times - self.t[idx]))

    def control_integral(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.u_step * np.diff(self.t))])
        idx = self.step_index(times)
        return cum[idx] + self.u_step[idx] * (times - self.t[idx])

    def mean_control(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        return np.diff(self.control_integral(edges)) / np.diff(edges)

    def copy_schedule(self) -> ControlSchedule:
        return ControlSchedule(self.t.copy(), np.clip(self.u_step, 0.0, 1.0))

    def segment_schedule(self, segments: int) -> ControlSchedule:
        edges = np.linspace(self.t[0], self.T, segments + 1)
        return ControlSchedule(edges, np.clip(self.mean_control(edges), 0.0, 1.0))


@dataclass
class MutantSweep:
    """Mutant trajectory, adjoint and payoff gradient for one schedule."""

    t: np.ndarray
    p_m: np.ndarray
    x_m: np.ndarray
    lam_m: np.ndarray
    sigma_m: np.ndarray
    gradient: np.ndarray  # dJ_m / d(schedule value), one entry per schedule segment
    payoff: float


class MutantEvaluator:
    """Exact mutant payoff for schedules with fixed edges against one resident.

    The evaluation grid merges the resident steps with the schedule edges.
    On each sub-step the resource is exponential and the mutant control is
    constant, so energy and payoff integrate in closed form; the backward
    recursion is the exact adjoint of that discrete map.
    """

    def __init__(self, ctx: ResidentContext, edges: np.ndarray, params: ModelParams):
        edges = np.asarray(edges, dtype=float)
        tol = 1e-9 * max(1.0, ctx.T)
        if abs(edges[0] - ctx.t[0]) > tol or abs(edges[-1] - ctx.T) > tol:
            raise ConfigurationError(
                f"schedule covers [{edges[0]:.6g}, {edges[-1]:.6g}], resident covers [{ctx.t[0]:.6g}, {ctx.T:.6g}]"
            )
        self.ctx = ctx
        self.params = params
        self.edges = edges
        nodes = np.union1d(ctx.t, edges[1:-1])
        keep = np.concatenate([[True], np.diff(nodes) > 1e-12 * max(1.0, ctx.T)])
        nodes = nodes[keep]
        nodes[-1] = ctx.T
        self.nodes = nodes
        h = np.diff(nodes)
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        step = ctx.step_index(mids)
        self.n = ctx.n_at(nodes)
        self.segment = np.clip(np.searchsorted(edges, mids, side="right") - 1, 0, edges.size - 2)
        a = params.a
        self.E = np.exp(-a * h)
        self.A, self.I, self.B = exp_moments(a, ctx.kappa[step], h)
        self.tau = nodes - nodes[0]
        self.grow = np.exp(a * self.tau)
        self.shrink = np.exp(-a * self.tau)

    def evaluate(self, values: np.ndarray, x_m0: float) -> MutantSweep:
        values = np.asarray(values, dtype=float)
        if values.size != self.edges.size - 1:
            raise ConfigurationError("schedule values do not match the evaluator edges")
        b = self.params.b
        v = values[self.segment]
        n_k = self.n[:-1]
        drive = b * v * n_k * self.I
        p0 = x_m0 * self.n[0]
        # p_{k+1} = E_k p_k + drive_k, solved with exponential weights
        p = self.shrink * (p0 + np.concatenate([[0.0], np.cumsum(drive * self.grow[1:])]))
        p_k = p[:-1]
        feed_part = b * v * n_k * self.B
        payoff = float(np.sum((1.0 - v) * (self.A * p_k + feed_part)))

        # lam_k = (1 - v_k) A_k + E_k lam_{k+1}, lam_N = 0
        weight = (1.0 - v) * self.A * self.shrink[:-1]
        tail = np.concatenate([np.cumsum(weight[::-1])[::-1], [0.0]])
        lam = self.grow * tail
        grad = -(self.A * p_k + feed_part) + (1.0 - v) * b * n_k * self.B + lam[1:] * b * n_k * self.I
        gradient = np.bincount(self.segment, weights=grad, minlength=self.edges.size - 1)
        x_m = p / self.n
        return MutantSweep(t=self.nodes, p_m=p, x_m=x_m, lam_m=lam,
                           sigma_m=b * lam - x_m, gradient=gradient, payoff=payoff)


def rollout_resident(field: StrategyField, p0: float, n0: float, params: ModelParams,
                     step: Optional[float] = None) -> ResidentContext:
    """Roll the field out from (p0, n0) and freeze the resident history."""
    record = rollout_field(field, ResidentState.from_pn(p0, n0), step=step)
    adjoint_sweep(record, params)
    return ResidentContext.from_record(record, params, kind=field.kind)


def mutant_payoff(ctx: ResidentContext, schedule: ControlSchedule, x_m0: float, params: ModelParams) -> float:
    if x_m0 < 0:
        raise ConfigurationError("initial mutant ratio must be non-negative")
    return MutantEvaluator(ctx, schedule.edges, params).evaluate(schedule.values, x_m0).payoff


def mutant_adjoint_sweep(ctx: ResidentContext, schedule: ControlSchedule, params: ModelParams,
                         x_m0: Optional[float] = None) -> MutantSweep:
    """sigma_m = b*lam_m - x_m along the mutant path, with the payoff gradient per segment."""
    x_m0 = float(ctx.x[0]) if x_m0 is None else x_m0
    return MutantEvaluator(ctx, schedule.edges, params).evaluate(schedule.values, x_m0)


def mutant_switching_along(ctx: ResidentContext, params: ModelParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t, sigma_m, sigma + c*mu) along the resident rollout.

    sigma_m comes from the exact discrete adjoint of the copying mutant;
    sigma and mu from the backward RK4 sweep of the resident record.
    """
    record = ctx.record
    if np.any(np.isnan(record.mu)):
        raise ConfigurationError("resident record has no adjoint sweep")
    sweep = mutant_adjoint_sweep(ctx, ctx.copy_schedule(), params)
    if sweep.t.size != record.t.size:
        raise ConfigurationError("copying mutant grid does not match the resident grid")
    return sweep.t, sweep.sigma_m, record.sigma + params.c * record.mu


@dataclass
class BestResponse:
    schedule: ControlSchedule
    payoff: float
    method: str
    converged: bool = True
    gradient_norm: float = 0.0
    iterations: int = 0
    clamped: int = 0


def responses_unique(candidates: Sequence[Tuple[ControlSchedule, float]], J_m: float,
                     tolerance: float, spread: float) -> bool:
    """False when two schedules within tolerance of the best payoff lie more than spread apart in L1."""
    near = [schedule for schedule, payoff in candidates if J_m - payoff <= tolerance]
    return all(first.l1_distance(second) <= spread
               for i, first in enumerate(near) for second in near[i + 1:])


@dataclass
class InvasionReport:
    params: Dict[str, float]
    p0: float
    n0: float
    J: float
    J_m: float
    J_copy: float
    delta_J: float
    verdict: Verdict
    l1_distance: float
    sigma_m_max: float
    gradient_payoff: float
    dp_payoff: float
    gradient_converged: bool
    gradient_norm: float
    dp_l1_distance: float = 0.0
    response_spread: float = 0.0  # L1 gap between the gradient and DP responses
    unique: bool = True
    switching_gap: float = 0.0  # max |sigma_m - (sigma + c*mu)| along the rollout
    best_response: ControlSchedule = field(repr=False, default=None)
    resident_schedule: ControlSchedule = field(repr=False, default=None)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "params": dict(self.params),
            "p0": self.p0,
            "n0": self.n0,
            "J": self.J,
            "J_m": self.J_m,
            "J_copy": self.J_copy,
            "delta_J": self.delta_J,
            "verdict": self.verdict.value,
            "l1_distance": self.l1_distance,
            "sigma_m_max": self.sigma_m_max,
            "gradient_payoff": self.gradient_payoff,
            "dp_payoff": self.dp_payoff,
            "gradient_converged": self.gradient_converged,
            "gradient_norm": self.gradient_norm,
            "dp_l1_distance": self.dp_l1_distance,
            "response_spread": self.response_spread,
            "unique": self.unique,
            "switching_gap": self.switching_gap,
        }


class MutantGame:
    """Best responses and certification against fields rolled out from one initial state."""

    def __init__(self, config: dict, params: ModelParams):
        self.params = params
        self.logger = logging.getLogger(__name__)
        game = config.get("game", {})
        self.segments = int(game.get("segments", 2000))
        self.max_iterations = int(game.get("max_iterations", 5000))
        self.gradient_tol = float(game.get("gradient_tol", 1e-6))
        self.cert_tolerance = float(game.get("cert_tolerance", 1e-3))
        self.uniqueness_spread = float(game.get("uniqueness_spread", 1e-2))
        self.dp_x_nodes = int(game.get("dp_x_nodes", 401))
        self.dp_x_max_factor = float(game.get("dp_x_max_factor", 1.5))
        self.dp_controls = int(game.get("dp_controls", 21))
        step_divisor = config.get("integrator", {}).get("step_divisor", 20000)
        self.step = params.T / step_divisor
        if self.segments < 1 or self.max_iterations < 0:
            raise ConfigurationError("game.segments and game.max_iterations must be positive")

    def best_response(self, ctx: ResidentContext, method: str = "gradient",
                      x_m0: Optional[float] = None) -> BestResponse:
        x_m0 = float(ctx.x[0]) if x_m0 is None else x_m0
        if method == "gradient":
            return self._gradient_response(ctx, x_m0)
        if method == "dp":
            return self._dp_response(ctx, x_m0)
        raise ConfigurationError(f"unknown best-response method {method!r}")

    def _gradient_response(self, ctx: ResidentContext, x_m0: float) -> BestResponse:
        """Projected gradient ascent from the resident's own segment schedule."""
        p = self.params
        start = ctx.segment_schedule(self.segments)
        evaluator = MutantEvaluator(ctx, start.edges, p)
        width = float(np.max(start.widths))
        lipschitz = 2.0 * p.b * float(np.max(ctx.n)) * width * (width + 2.0 / p.a)
        base_step = 1.0 / lipschitz
        step = base_step

        values = start.values.copy()
        sweep = evaluator.evaluate(values, x_m0)
        norm = np.inf
        iterations = 0
        for iterations in range(self.max_iterations + 1):
            mapped = (np.clip(values + base_step * sweep.gradient, 0.0, 1.0) - values) / base_step
            norm = float(np.max(np.abs(mapped)))
            if norm <= self.gradient_tol or iterations == self.max_iterations:
                break
            while True:
                trial = np.clip(values + step * sweep.gradient, 0.0, 1.0)
                candidate = evaluator.evaluate(trial, x_m0)
                if candidate.payoff >= sweep.payoff - 1e-15 * abs(sweep.payoff):
                    break
                step *= 0.5
                if step < 1e-12 * base_step:
                    candidate = None
                    break
            if candidate is None:
                self.logger.debug(f"Gradient ascent stalled at iteration {iterations}")
                break
            values, sweep = trial, candidate
            step = min(2.0 * step, base_step)
            if iterations % 500 == 0:
                self.logger.debug(f"iteration {iterations}: J_m={sweep.payoff:.12f}, |G|={norm:.3e}")

        converged = norm <= self.gradient_tol
        if not converged:
            self.logger.warning(
                f"Gradient best response did not converge after {iterations} iterations "
                f"(projected gradient {norm:.3e})"
            )
        return BestResponse(schedule=ControlSchedule(start.edges, values), payoff=sweep.payoff,
                            method="gradient", converged=converged, gradient_norm=norm,
                            iterations=iterations)

    def _dp_response(self, ctx: ResidentContext, x_m0: float) -> BestResponse:
        """Backward induction on (t, x_m) with the resident history frozen, then a greedy forward pass."""
        p = self.params
        a, b, c = p.a, p.b, p.c
        edges = np.linspace(ctx.t[0], ctx.T, self.segments + 1)
        width = np.diff(edges)
        n_edges = ctx.n_at(edges)
        u_bar = ctx.mean_control(edges)
        x_max = self.dp_x_max_factor * max(float(np.max(ctx.x)), b / a, x_m0)
        grid = np.linspace(0.0, x_max, self.dp_x_nodes)
        controls = np.linspace(0.0, 1.0, self.dp_controls)

        rate = -a + c * u_bar
        growth = np.exp(rate * width)
        drive = b * width * phi1(rate * width)

        def step_values(k, x, W_next):
            x_next = x[..., None] * growth[k] + controls * drive[k]
            reward = (1.0 - controls) * 0.5 * width[k] * (x[..., None] * n_edges[k] + x_next * n_edges[k + 1])
            cont = np.interp(x_next.ravel(), grid, W_next).reshape(x_next.shape)
            return reward + cont, x_next

        W = np.zeros((self.segments + 1, grid.size))
        clamped = 0
        for k in range(self.segments - 1, -1, -1):
            q, x_next = step_values(k, grid, W[k + 1])
            best = np.argmax(q, axis=-1)
            clamped += int(np.count_nonzero(x_next[np.arange(grid.size), best] > x_max))
            W[k] = q[np.arange(grid.size), best]
        if clamped:
            self.logger.warning(f"Mutant DP clamped {clamped} transitions at x_max={x_max:.4g}")

        values = np.empty(self.segments)
        x = np.array(x_m0)
        for k in range(self.segments):
            q, x_next = step_values(k, x, W[k + 1])
            choice = int(np.argmax(q))
            values[k] = controls[choice]
            x = x_next[choice]
        schedule = ControlSchedule(edges, values)
        payoff = MutantEvaluator(ctx, edges, p).evaluate(values, x_m0).payoff
        return BestResponse(schedule=schedule, payoff=payoff, method="dp", clamped=clamped)

    def certify(self, field: StrategyField, p0: float, n0: float) -> InvasionReport:
        """Compare the best mutant payoff with the copying mutant and give the verdict."""
        p = self.params
        ctx = rollout_resident(field, p0, n0, p, step=self.step)
        x_m0 = float(ctx.x[0])
        copy = ctx.copy_schedule()
        copy_sweep = mutant_adjoint_sweep(ctx, copy, p, x_m0)
        J_copy = copy_sweep.payoff

        grad = self.best_response(ctx, "gradient", x_m0)
        dp = self.best_response(ctx, "dp", x_m0)
        chosen = grad if grad.converged else dp
        J_m = max(grad.payoff, dp.payoff)
        delta_J = J_m - J_copy
        tolerance = self.cert_tolerance * ctx.J
        verdict = Verdict.UNINVADABLE if delta_J <= tolerance else Verdict.INVADABLE

        # largest sigma_m where the resident leaves room to feed more
        mids = 0.5 * (copy_sweep.t[:-1] + copy_sweep.t[1:])
        room = ctx.u_step[ctx.step_index(mids)] < 1.0 - 1e-9
        sigma_m_max = float(np.max(copy_sweep.sigma_m[:-1][room])) if np.any(room) else 0.0
        _, sigma_m, shifted = mutant_switching_along(ctx, p)
        switching_gap = float(np.max(np.abs(sigma_m - shifted)))

        unique = responses_unique(
            [(grad.schedule, grad.payoff), (dp.schedule, dp.payoff), (copy, J_copy)],
            J_m, tolerance, self.uniqueness_spread * p.T,
        )
        if not unique:
            self.logger.warning(
                f"Best responses within {tolerance:.3e} of J_m differ by more than "
                f"{self.uniqueness_spread * p.T:.3e} in L1"
            )

        report = InvasionReport(
            params=p.as_dict(), p0=p0, n0=n0, J=ctx.J, J_m=J_m, J_copy=J_copy,
            delta_J=delta_J, verdict=verdict, l1_distance=chosen.schedule.l1_distance(copy),
            sigma_m_max=sigma_m_max, gradient_payoff=grad.payoff, dp_payoff=dp.payoff,
            gradient_converged=grad.converged, gradient_norm=grad.gradient_norm,
            dp_l1_distance=dp.schedule.l1_distance(copy),
            response_spread=grad.schedule.l1_distance(dp.schedule), unique=unique,
            switching_gap=switching_gap, best_response=chosen.schedule, resident_schedule=copy,
        )
        self.logger.info(
            f"Certified {field.kind.value} field from x0={x_m0:.4f}: J={ctx.J:.8f}, "
            f"delta_J={delta_J:.3e}, verdict {verdict.value}"
        )
        return report
