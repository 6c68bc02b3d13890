"""
Homogeneous Reduction
Dimension reduction of optimal control problems that are homogeneous of
degree one in the state, with numeric homogeneity checks and the
consumer-resource instance.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .model_core import ModelParams, integrate

logger = logging.getLogger(__name__)

Dynamics = Callable[[np.ndarray, float], np.ndarray]
Reward = Callable[[np.ndarray, float], float]
Terminal = Callable[[np.ndarray], float]
Manifold = Callable[[float, np.ndarray], float]


@dataclass
class HomogeneousProblem:
    """max int L(y, u) dt + K(y(T)) subject to dy/dt = f(y, u); the last component scales."""

    dim: int
    f: Dynamics
    L: Reward
    K: Terminal
    manifold: Manifold
    horizon: float
    u_bounds: tuple = (0.0, 1.0)
    name: str = "problem"


@dataclass
class ReducedProblem:
    """Problem in x = y[:-1] / y[-1] with discount rate f_n(x, u)."""

    source: HomogeneousProblem
    g: Callable[[np.ndarray, float], np.ndarray]
    L: Callable[[np.ndarray, float], float]
    K: Callable[[np.ndarray], float]
    manifold: Callable[[float, np.ndarray], float]
    rate: Callable[[np.ndarray, float], float]

    @property
    def dim(self) -> int:
        return self.source.dim - 1


@dataclass
class HomogeneityCheck:
    name: str
    max_violation: float
    passed: bool


@dataclass
class HomogeneityReport:
    checks: List[HomogeneityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violators(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "checks": [{"name": c.name, "max_violation": c.max_violation, "passed": c.passed} for c in self.checks],
            "passed": self.passed,
        }


def _lift(x: np.ndarray) -> np.ndarray:
    return np.append(np.atleast_1d(x), 1.0)


def check_homogeneity(prob: HomogeneousProblem, probes: int = 200, seed: int = 0,
                      scales: Optional[Sequence[float]] = None) -> HomogeneityReport:
    """|phi(s y, u) - s phi(y, u)| <= 1e-9 (1 + |s phi(y, u)|) for each evaluator and f component."""
    rng = np.random.default_rng(seed)
    lo, hi = prob.u_bounds
    names = [f"f[{i}]" for i in range(prob.dim)] + ["L", "K", "manifold"]
    worst = {name: 0.0 for name in names}
    failed = {name: False for name in names}

    for k in range(probes):
        y = rng.uniform(0.05, 3.0, prob.dim)
        u = rng.uniform(lo, hi)
        t = rng.uniform(0.0, prob.horizon)
        s = float(scales[k % len(scales)]) if scales else float(rng.uniform(0.1, 10.0))
        pairs = []
        fy, fsy = np.asarray(prob.f(y, u), dtype=float), np.asarray(prob.f(s * y, u), dtype=float)
        pairs += [(f"f[{i}]", fsy[i], s * fy[i]) for i in range(prob.dim)]
        pairs.append(("L", prob.L(s * y, u), s * prob.L(y, u)))
        pairs.append(("K", prob.K(s * y), s * prob.K(y)))
        pairs.append(("manifold", prob.manifold(t, s * y), s * prob.manifold(t, y)))
        for name, scaled, expected in pairs:
            gap = abs(scaled - expected)
            worst[name] = max(worst[name], gap)
            if gap > 1e-9 * (1.0 + abs(expected)):
                failed[name] = True

    report = HomogeneityReport([HomogeneityCheck(n, float(worst[n]), not failed[n]) for n in names])
    if not report.passed:
        logger.info(f"Homogeneity violated by {', '.join(report.violators)} in {prob.name}")
    return report


def reduce(prob: HomogeneousProblem, report: Optional[HomogeneityReport] = None) -> ReducedProblem:
    """Build g, L, K, manifold and the discount rate from phi(y) = y_n phi((y/y_n))."""
    report = report or check_homogeneity(prob)
    if not report.passed:
        raise ConfigurationError(f"{prob.name} is not homogeneous of degree one: {report.violators}")

    def f_tilde(x, u):
        return np.asarray(prob.f(_lift(x), u), dtype=float)

    def g(x, u):
        fx = f_tilde(x, u)
        return fx[:-1] - np.atleast_1d(x) * fx[-1]

    return ReducedProblem(
        source=prob,
        g=g,
        L=lambda x, u: prob.L(_lift(x), u),
        K=lambda x: prob.K(_lift(x)),
        manifold=lambda t, x: prob.manifold(t, _lift(x)),
        rate=lambda x, u: float(f_tilde(x, u)[-1]),
    )


def consumer_resource_problem(params: ModelParams, reward_power: float = 1.0) -> HomogeneousProblem:
    """y = (p, n); reward_power != 1 gives the non-homogeneous (1 - u) p^k variant."""
    a, b, c = params.a, params.b, params.c

    def f(y, u):
        p, n = y
        return np.array([-a * p + b * n * u, -c * n * u])

    return HomogeneousProblem(
        dim=2,
        f=f,
        L=lambda y, u: (1.0 - u) * y[0] ** reward_power,
        K=lambda y: 0.0,
        manifold=lambda t, y: (t - params.T) * y[-1],
        horizon=params.T,
        name="consumer-resource" if reward_power == 1.0 else f"consumer-resource (p^{reward_power:g} reward)",
    )


@dataclass
class FullRun:
    t: np.ndarray
    y: np.ndarray
    payoff: float


@dataclass
class ReducedRun:
    t: np.ndarray
    x: np.ndarray
    log_scale: np.ndarray
    discounted_payoff: float  # per unit of y_n(0)


def simulate_full(prob: HomogeneousProblem, y0: Sequence[float], schedule, step: float) -> FullRun:
    result = integrate(lambda t, y, u: np.asarray(prob.f(y, u), dtype=float), y0, 0.0, prob.horizon,
                       schedule, step, reward=lambda t, y, u: prob.L(y, u))
    payoff = result.payoff + prob.K(result.y[-1])
    return FullRun(t=result.t, y=result.y, payoff=payoff)


def simulate_reduced(reduced: ReducedProblem, x0: Sequence[float], schedule, step: float) -> ReducedRun:
    """Integrate (x, log y_n) with reward e^{log y_n} L(x, u), starting from log y_n = 0."""
    dim = reduced.dim

    def rhs(t, z, u):
        x = z[:dim]
        return np.append(reduced.g(x, u), reduced.rate(x, u))

    def reward(t, z, u):
        return np.exp(z[dim]) * reduced.L(z[:dim], u)

    start = np.append(np.atleast_1d(np.asarray(x0, dtype=float)), 0.0)
    result = integrate(rhs, start, 0.0, reduced.source.horizon, schedule, step, reward=reward)
    final = result.y[-1]
    payoff = result.payoff + np.exp(final[dim]) * reduced.K(final[:dim])
    return ReducedRun(t=result.t, x=result.y[:, :dim], log_scale=result.y[:, dim], discounted_payoff=payoff)


def reduction_commutes(prob: HomogeneousProblem, reduced: ReducedProblem, y0: Sequence[float],
                       schedule, step: float) -> Dict[str, float]:
    """Sup-norm gaps between reducing a full run and reconstructing a reduced run."""
    y0 = np.asarray(y0, dtype=float)
    full = simulate_full(prob, y0, schedule, step)
    red = simulate_reduced(reduced, y0[:-1] / y0[-1], schedule, step)
    scale = y0[-1] * np.exp(red.log_scale)
    x_from_full = full.y[:, :-1] / full.y[:, -1:]
    return {
        "x_sup": float(np.max(np.abs(x_from_full - red.x))),
        "scale_sup": float(np.max(np.abs(full.y[:, -1] - scale) / np.abs(full.y[:, -1]))),
        "payoff_gap": float(abs(full.payoff - y0[-1] * red.discounted_payoff)),
        "full_payoff": float(full.payoff),
        "reduced_payoff": float(y0[-1] * red.discounted_payoff),
    }


def verify_value_homogeneity(prob: HomogeneousProblem, reduced: ReducedProblem,
                             full_value: Callable[[np.ndarray], float],
                             reduced_value: Callable[[np.ndarray], float],
                             probes: Sequence[Sequence[float]]) -> Dict[str, Any]:
    """Compare V(y) with y_n * V~(y[:-1] / y_n) at each probe."""
    checks = []
    for y in probes:
        y = np.asarray(y, dtype=float)
        if y[-1] <= 0:
            raise ConfigurationError("value probes need a positive scaling component")
        full = float(full_value(y))
        scaled = float(y[-1] * reduced_value(y[:-1] / y[-1]))
        checks.append({
            "y": [float(v) for v in y],
            "full": full,
            "reduced": scaled,
            "rel_err": abs(full - scaled) / max(abs(full), 1e-300),
        })
    return {"checks": checks, "max_rel_err": max(c["rel_err"] for c in checks) if checks else 0.0}


def hamiltonian_agreement(reduced: ReducedProblem, params: ModelParams, probes: int = 1000,
                          seed: int = 0) -> float:
    """Largest gap between lam*g + V*rate + L and the reduced HJB bracket of the model."""
    a, b, c = params.a, params.b, params.c
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        x = rng.uniform(0.0, 3.0)
        u = rng.uniform(0.0, 1.0)
        lam = rng.normal()
        value = rng.uniform(0.0, 2.0)
        generic = lam * reduced.g(np.array([x]), u)[0] + value * reduced.rate(np.array([x]), u) + reduced.L(np.array([x]), u)
        bracket = -lam * (a * x - (b + c * x) * u) - value * c * u + (1.0 - u) * x
        worst = max(worst, abs(generic - bracket))
    return float(worst)
