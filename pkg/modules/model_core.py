"""
Model Core
Parameters, state types, dynamics, closed-form constant-control arcs and the
fixed-step RK4 integrator shared by every other module.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    InvalidParameterError,
    InvalidStateError,
)

logger = logging.getLogger(__name__)

DEFAULT_DEGENERACY_TOL = 1e-9
DEFAULT_STEP_DIVISOR = 20000


@dataclass(frozen=True)
class ModelParams:
    """Constants of the seasonal consumer-resource model."""

    a: float  # energy decay rate
    b: float  # feeding conversion rate
    c: float  # resource depletion rate
    T: float  # season length
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL

    def __post_init__(self):
        for name in ("a", "b", "c", "T"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be a finite number, got {value!r}")
            if value <= 0:
                raise InvalidParameterError(f"{name} must be strictly positive, got {value}")
        if self.degeneracy_tol < 0:
            raise InvalidParameterError("degeneracy_tol must be non-negative")

    @classmethod
    def from_config(cls, section: Dict[str, Any], degeneracy_tol: float = DEFAULT_DEGENERACY_TOL) -> "ModelParams":
        """Build parameters from the `model` section of a run configuration."""
        try:
            return cls(
                a=float(section["a"]),
                b=float(section["b"]),
                c=float(section["c"]),
                T=float(section["T"]),
                degeneracy_tol=degeneracy_tol,
            )
        except KeyError as e:
            raise InvalidParameterError(f"missing model parameter {e}") from e

    @property
    def degenerate(self) -> bool:
        """True when c == a within tolerance; u=1 arcs use the linear limit."""
        return abs(self.c - self.a) <= self.degeneracy_tol * self.a

    @property
    def t_hat(self) -> float:
        return self.T - math.log(2.0) / self.a

    @property
    def x_hat(self) -> float:
        return self.b / (2.0 * self.a)

    @property
    def long_season_threshold(self) -> float:
        head = math.log(2.0) / self.a
        if self.degenerate:
            return head + 1.0 / (2.0 * self.a)
        return head + math.log((self.c + self.a) / (2.0 * self.a)) / (self.c - self.a)

    @property
    def long_season(self) -> bool:
        return self.T > self.long_season_threshold

    @property
    def default_step(self) -> float:
        return self.T / DEFAULT_STEP_DIVISOR

    def as_dict(self) -> Dict[str, float]:
        return {"a": self.a, "b": self.b, "c": self.c, "T": self.T}


@dataclass(frozen=True)
class Control:
    """Feeding fraction u in [0, 1]."""

    u: float

    def __post_init__(self):
        if not (0.0 <= self.u <= 1.0):
            raise InvalidStateError(f"control must lie in [0, 1], got {self.u}")

    def __float__(self) -> float:
        return float(self.u)


ControlLike = Union[Control, float]


def _u(value: ControlLike) -> float:
    return float(value.u) if isinstance(value, Control) else float(value)


@dataclass(frozen=True)
class ResidentState:
    p: float
    n: float
    x: float

    @classmethod
    def from_pn(cls, p: float, n: float) -> "ResidentState":
        if n <= 0:
            raise InvalidStateError(f"resource must be strictly positive, got n={n}")
        return cls(p=p, n=n, x=p / n)

    def check(self) -> None:
        if not all(math.isfinite(v) for v in (self.p, self.n, self.x)):
            raise InvalidStateError(f"non-finite resident state {self}")
        if self.n <= 0:
            raise InvalidStateError(f"resource must be strictly positive, got n={self.n}")


@dataclass(frozen=True)
class MutantState:
    p_m: float
    x_m: float

    def check(self) -> None:
        if not (math.isfinite(self.p_m) and math.isfinite(self.x_m)):
            raise InvalidStateError(f"non-finite mutant state {self}")


def resident_rhs(s: ResidentState, u: ControlLike, params: ModelParams) -> Tuple[float, float, float]:
    """Time derivatives (dp, dn, dx) of the resident system."""
    s.check()
    u = _u(u)
    a, b, c = params.a, params.b, params.c
    return (-a * s.p + b * s.n * u, -c * s.n * u, -a * s.x + (b + c * s.x) * u)


def mutant_rhs(m: MutantState, u_m: ControlLike, u_res: ControlLike, n: float,
               params: ModelParams) -> Tuple[float, float]:
    """Time derivatives (dp_m, dx_m); resource depletion follows the resident control."""
    m.check()
    if not math.isfinite(n) or n <= 0:
        raise InvalidStateError(f"resource must be strictly positive, got n={n}")
    u_m, u_res = _u(u_m), _u(u_res)
    a, b, c = params.a, params.b, params.c
    return (-a * m.p_m + b * n * u_m, -a * m.x_m + b * u_m + c * m.x_m * u_res)


def arc_u0(t, t_ref, x_ref, params: ModelParams):
    """Coasting arc (u=0) through (t_ref, x_ref)."""
    return x_ref * np.exp(params.a * (np.asarray(t_ref) - np.asarray(t)))


def arc_u1(t, t_s, x_s, params: ModelParams):
    """Feeding arc (u=1) through (t_s, x_s); may leave the positive axis."""
    a, b, c = params.a, params.b, params.c
    lag = np.asarray(t_s) - np.asarray(t)
    if params.degenerate:
        return x_s - b * lag
    k = b / (c - a)
    return (x_s + k) * np.exp(-(c - a) * lag) - k


def phi1(z):
    """expm1(z)/z, continuous at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def _psi(z):
    # integral of v*exp(-z v) over [0, 1]
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    safe = np.where(small, 1.0, z)
    exact = (1.0 - (1.0 + safe) * np.exp(-safe)) / (safe * safe)
    series = 0.5 - z / 3.0 + z * z / 8.0
    return np.where(small, series, exact)


def exp_moments(a: float, kappa, h) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact step integrals for dp = -a p + b n u with n decaying at rate kappa.

    Returns (A, I, B) over a step of length h:
      A = int_0^h e^{-a s} ds
      I = int_0^h e^{-a (h - r)} e^{-kappa r} dr
      B = int_0^h int_0^s e^{-a (s - r)} e^{-kappa r} dr ds
    """
    kappa = np.asarray(kappa, dtype=float)
    h = np.asarray(h, dtype=float)
    A = h * phi1(-a * h)
    I = np.exp(-a * h) * h * phi1((a - kappa) * h)
    gap = a - kappa
    close = np.abs(gap * h) < 1e-4
    safe_gap = np.where(close, 1.0, gap)
    B_far = h * (phi1(-kappa * h) - phi1(-a * h)) / safe_gap
    B_near = h * h * _psi(0.5 * (a + kappa) * h)
    return A, I, np.where(close, B_near, B_far)


@dataclass
class ControlSchedule:
    """Piecewise-constant control u(t) = values[k] on [edges[k], edges[k+1])."""

    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.edges.ndim != 1 or self.edges.size != self.values.size + 1:
            raise ConfigurationError("schedule needs len(edges) == len(values) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise ConfigurationError("schedule edges must be strictly increasing")
        if np.any(~np.isfinite(self.values)) or np.any(self.values < 0) or np.any(self.values > 1):
            raise ConfigurationError("schedule values must lie in [0, 1]")

    @classmethod
    def constant(cls, u: float, t0: float, t1: float) -> "ControlSchedule":
        return cls(np.array([t0, t1]), np.array([u]))

    @classmethod
    def uniform(cls, values: Sequence[float], t0: float, t1: float) -> "ControlSchedule":
        values = np.asarray(values, dtype=float)
        return cls(np.linspace(t0, t1, values.size + 1), values)

    @property
    def t0(self) -> float:
        return float(self.edges[0])

    @property
    def t1(self) -> float:
        return float(self.edges[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return self.edges[1:-1]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def segment_index(self, t) -> np.ndarray:
        idx = np.searchsorted(self.edges, t, side="right") - 1
        return np.clip(idx, 0, self.values.size - 1)

    def __call__(self, t):
        out = self.values[self.segment_index(t)]
        return float(out) if np.ndim(out) == 0 else out

    def covers(self, t0: float, t1: float, tol: float = 1e-9) -> bool:
        return abs(self.t0 - t0) <= tol * max(1.0, abs(t0)) and abs(self.t1 - t1) <= tol * max(1.0, abs(t1))

    def l1_distance(self, other: "ControlSchedule") -> float:
        """Integral of |u - v| over the common support (merged breakpoints)."""
        edges = np.union1d(self.edges, other.edges)
        edges = edges[(edges >= max(self.t0, other.t0)) & (edges <= min(self.t1, other.t1))]
        mids = 0.5 * (edges[:-1] + edges[1:])
        return float(np.sum(np.abs(self(mids) - other(mids)) * np.diff(edges)))

    def switch_count(self, threshold: float = 0.5) -> int:
        on = self.values > threshold
        return int(np.count_nonzero(on[1:] != on[:-1]))


@dataclass
class IntegrationResult:
    """Raw output of `integrate`: nodes, states, node controls and accumulated payoff."""

    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    payoff: float
    stages: Optional[np.ndarray] = None  # (start, mid, end) control of each step


@dataclass
class TrajectoryRecord:
    """Sampled resident trajectory (t, x, u, lambda, mu, sigma, p, n) with its payoff."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    p: np.ndarray
    n: np.ndarray
    payoff: float
    lam: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    junctions: list = field(default_factory=list)
    stage_u: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ConfigurationError("trajectory samples must be strictly increasing in t")
        for name in ("lam", "mu", "sigma"):
            if getattr(self, name) is None:
                setattr(self, name, np.full_like(self.t, np.nan))

    def __len__(self) -> int:
        return int(self.t.size)

    def samples(self) -> Iterator[Tuple[float, ...]]:
        for row in zip(self.t, self.x, self.u, self.lam, self.mu, self.sigma, self.p, self.n):
            yield tuple(float(v) for v in row)

    def ratio_error(self) -> float:
        """Largest |x - p/n| along the record."""
        return float(np.max(np.abs(self.x - self.p / self.n)))


def rk4_step(rhs: Callable, t: float, y: np.ndarray, h: float, controls: Tuple[float, float, float]) -> np.ndarray:
    """One classical RK4 step; `controls` holds u at the start, middle and end of the step."""
    u0, um, u1 = controls
    k1 = rhs(t, y, u0)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, um)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, um)
    k4 = rhs(t + h, y + h * k3, u1)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_grid(t0: float, t1: float, step: float, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Uniform nodes from t0 towards t1 with breakpoints inserted exactly.

    Works in both directions. Nodes closer than 1e-9 * step to a breakpoint
    are replaced by the breakpoint.
    """
    if step <= 0:
        raise ConfigurationError(f"step must be positive, got {step}")
    span = abs(t1 - t0)
    if span == 0.0:
        return np.array([t0])
    if step > span * (1.0 + 1e-12):
        raise ConfigurationError(f"step {step} larger than integration span {span}")
    direction = 1.0 if t1 > t0 else -1.0
    count = int(math.floor(span / step + 1e-9))
    nodes = t0 + direction * step * np.arange(count + 1)
    tol = 1e-9 * step
    if abs(nodes[-1] - t1) > tol:
        nodes = np.append(nodes, t1)
    else:
        nodes[-1] = t1
    lo, hi = min(t0, t1), max(t0, t1)
    inner = [float(bp) for bp in breakpoints if lo + tol < bp < hi - tol]
    if inner:
        keep = np.ones(nodes.size, dtype=bool)
        for bp in inner:
            near = np.abs(nodes - bp) <= tol
            near[0] = near[-1] = False
            keep &= ~near
        nodes = np.concatenate([nodes[keep], inner])
        nodes = np.unique(nodes)
        if direction < 0:
            nodes = nodes[::-1]
    return nodes


def integrate(rhs: Callable[[float, np.ndarray, float], np.ndarray],
              initial: Sequence[float],
              t0: float,
              t1: float,
              control_schedule: Union[Callable[[float], float], float],
              step: float,
              reward: Optional[Callable[[float, np.ndarray, float], float]] = None) -> IntegrationResult:
    """Fixed-step RK4 integration from t0 to t1 (either direction).

    The running reward is integrated as an extra state component, so the
    payoff carries the same order of accuracy as the state. Samples are
    placed exactly on the schedule breakpoints.
    """
    schedule = control_schedule
    if not callable(schedule):
        value = float(schedule)
        schedule = lambda t: value  # noqa: E731
    breakpoints = getattr(schedule, "breakpoints", ())
    nodes = step_grid(t0, t1, step, breakpoints)

    y0 = np.asarray(initial, dtype=float)
    dim = y0.size
    if reward is None:
        augmented = lambda t, y, u: np.asarray(rhs(t, y, u), dtype=float)  # noqa: E731
        state = y0.copy()
    else:
        def augmented(t, y, u):
            return np.append(np.asarray(rhs(t, y[:dim], u), dtype=float), reward(t, y[:dim], u))
        state = np.append(y0, 0.0)

    states = np.empty((nodes.size, dim))
    controls = np.empty(nodes.size)
    stages = np.empty((max(nodes.size - 1, 0), 3))
    states[0] = y0
    for k in range(nodes.size - 1):
        ta, tb = nodes[k], nodes[k + 1]
        h = tb - ta
        nudge = 1e-9 * h
        u_start = float(schedule(ta + nudge))
        u_mid = float(schedule(ta + 0.5 * h))
        u_end = float(schedule(tb - nudge))
        controls[k] = u_start
        stages[k] = (u_start, u_mid, u_end)
        state = rk4_step(augmented, ta, state, h, (u_start, u_mid, u_end))
        if not np.all(np.isfinite(state)):
            raise DivergenceError(tb)
        states[k + 1] = state[:dim]
        controls[k + 1] = u_end
    payoff = float(state[dim]) if reward is not None else 0.0
    return IntegrationResult(t=nodes, y=states, u=controls, payoff=payoff, stages=stages)


def _resident_vector_rhs(params: ModelParams):
    a, b, c = params.a, params.b, params.c

    def rhs(t, y, u):
        p, n, x = y
        return np.array([-a * p + b * n * u, -c * n * u, -a * x + (b + c * x) * u])

    return rhs


def resident_trajectory(initial: ResidentState,
                        schedule: Union[Callable[[float], float], float],
                        params: ModelParams,
                        t0: float = 0.0,
                        t1: Optional[float] = None,
                        step: Optional[float] = None) -> TrajectoryRecord:
    """Integrate (p, n, x) jointly under an open-loop schedule, accumulating J = int (1-u) p dt."""
    initial.check()
    t1 = params.T if t1 is None else t1
    step = params.default_step if step is None else step
    result = integrate(
        _resident_vector_rhs(params),
        (initial.p, initial.n, initial.x),
        t0, t1, schedule, step,
        reward=lambda t, y, u: (1.0 - u) * y[0],
    )
    if np.any(result.y[:, 1] <= 0):
        raise InvalidStateError("resource left the positive half-line")
    return TrajectoryRecord(
        t=result.t, x=result.y[:, 2], u=result.u,
        p=result.y[:, 0], n=result.y[:, 1], payoff=result.payoff,
        stage_u=result.stages,
    )
