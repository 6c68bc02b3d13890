"""
HJB Check
Value-by-simulation residual of the reduced Hamilton-Jacobi-Bellman equation
for a synthesized field, away from the boundary curve.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .errors import ConfigurationError, InsufficientInteriorError
from .field_rollout import reduced_value_grid
from .field_synthesis import StrategyField, last_primary, switch_line_tributary

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HJBGrid:
    nt: int = 200
    nx: int = 200
    x_max: float = 2.0
    substeps: int = 20
    exclusion_cells: int = 2

    @classmethod
    def from_config(cls, section: Dict[str, Any], b_over_a: float) -> "HJBGrid":
        return cls(
            nt=int(section.get("nt", 200)),
            nx=int(section.get("nx", 200)),
            x_max=float(section.get("x_max_factor", 2.0)) * b_over_a,
            substeps=int(section.get("steps", 20)),
            exclusion_cells=int(section.get("exclusion_cells", 2)),
        )

    def axes(self, T: float):
        if self.nt < 3 or self.nx < 3:
            raise ConfigurationError("HJB grid needs at least 3 nodes per axis")
        return np.linspace(0.0, T, self.nt), np.linspace(0.0, self.x_max, self.nx)


@dataclass
class HJBReport:
    max_residual: float
    mean_residual: float
    interior_nodes: int
    terminal_max: float
    argmax_agreement: float
    compared_nodes: int


def _clear_of(gap: np.ndarray, clearance: float) -> np.ndarray:
    """Nodes whose five-point stencil stays on one side of a curve, farther than clearance."""
    far = np.abs(gap) > clearance
    side = np.sign(gap)
    mask = np.zeros_like(far)
    centre = side[1:-1, 1:-1]
    mask[1:-1, 1:-1] = (
        far[1:-1, 1:-1] & far[:-2, 1:-1] & far[2:, 1:-1]
        & (centre == side[:-2, 1:-1]) & (centre == side[2:, 1:-1])
        & (centre == side[1:-1, :-2]) & (centre == side[1:-1, 2:])
    )
    return mask


def _seams(field: StrategyField, t: np.ndarray):
    """Curves through the junction where the value loses its second derivative.

    Above the arc this is the last primary trajectory, below it the feeding
    tributary that reaches the switch line exactly at t_hat.
    """
    if not field.has_arc:
        return []
    params = field.params
    early = t < params.t_hat
    far_away = np.full_like(t, np.inf)
    upper = np.where(early, last_primary(t, params), far_away)
    lower = np.where(early, switch_line_tributary(np.minimum(t, params.t_hat), params.t_hat, params), far_away)
    return [upper, lower]


def hjb_residual(field: StrategyField, grid: HJBGrid, switch_threshold: float = 1e-3) -> HJBReport:
    """Finite-difference HJB residual of the field's own value on interior nodes.

    A node is interior when it is off the grid edges and every node of its
    five-point stencil has distance > band from the boundary curve and from
    the seams through the junction, with the band widened to
    max(band, exclusion_cells * dx).
    """
    params = field.params
    t, x = grid.axes(params.T)
    value = reduced_value_grid(field, t, x, grid.substeps)
    dt, dx = t[1] - t[0], x[1] - x[0]
    V_t, V_x = np.gradient(value, dt, dx)

    a, b, c = params.a, params.b, params.c
    X = x[None, :]
    switch = V_x * (b + c * X) - c * value - X
    residual = V_t - a * X * V_x + X + np.maximum(switch, 0.0)

    # distance > band, band widened to whole cells
    clearance = max(field.band, grid.exclusion_cells * dx)
    interior = _clear_of(x[None, :] - field.boundary(t)[:, None], clearance)
    for seam in _seams(field, t):
        interior &= _clear_of(x[None, :] - seam[:, None], clearance)
    count = int(np.count_nonzero(interior))
    if count == 0:
        raise InsufficientInteriorError("no grid node lies clear of the boundary band")

    abs_res = np.abs(residual[interior])
    feedback = field.control(np.repeat(t, x.size).reshape(t.size, x.size), np.broadcast_to(X, value.shape))
    decided = interior & (np.abs(switch) > switch_threshold)
    best = np.where(switch > 0, 1.0, 0.0)
    compared = int(np.count_nonzero(decided))
    agreement = float(np.mean(best[decided] == feedback[decided])) if compared else 1.0

    report = HJBReport(
        max_residual=float(np.max(abs_res)),
        mean_residual=float(np.mean(abs_res)),
        interior_nodes=count,
        terminal_max=float(np.max(np.abs(value[-1]))),
        argmax_agreement=agreement,
        compared_nodes=compared,
    )
    logger.info(
        f"HJB residual of {field.kind.value} field: max {report.max_residual:.3e} over "
        f"{count} interior nodes, argmax agreement {agreement:.4f}"
    )
    return report
