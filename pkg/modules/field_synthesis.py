"""
Field Synthesis
Closed-form switch line, singular arcs and the cooperative and ESS feedback
fields, together with the switching-function sign checks on tributaries.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import (
    ConfigurationError,
    DomainError,
    InvalidAnchorError,
    SeasonTooShortError,
)
from .model_core import ModelParams, arc_u1, integrate

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARY_SAMPLES = 4096
DEFAULT_BAND_FACTOR = 1e-6
ESS_CLAMP = 1e-9

# regime codes returned by StrategyField.regime
COAST = 0
FEED = 1
SINGULAR = 2


class FieldKind(str, Enum):
    COOPERATIVE = "coop"
    ESS = "ess"


class AnchorKind(str, Enum):
    SWITCH_LINE = "switch_line"
    COOP_ARC = "coop_arc"
    ESS_ARC = "ess_arc"


@dataclass(frozen=True)
class Junction:
    t_hat: float
    x_hat: float
    x_T: float  # terminal value of the last primary trajectory


@dataclass(frozen=True)
class AdjointState:
    lam: float
    mu: float
    nu: float = 0.0  # carried for completeness, nothing reads it


# ---------------------------------------------------------------------------
# Switch line and primary trajectories
# ---------------------------------------------------------------------------

def switch_line(t, params: ModelParams):
    """x = (b/a)(1 - e^{-a(T-t)}) on [t_hat, T]."""
    t_arr = np.asarray(t, dtype=float)
    tol = 1e-12 * max(1.0, params.T)
    if np.any(t_arr < params.t_hat - tol) or np.any(t_arr > params.T + tol):
        raise DomainError(f"switch line is defined on [{params.t_hat:.6g}, {params.T:.6g}], got t={t}")
    x = (params.b / params.a) * (-np.expm1(-params.a * (params.T - t_arr)))
    return float(x) if x.ndim == 0 else x


def switch_line_slope(t, params: ModelParams):
    return -params.b * np.exp(-params.a * (params.T - np.asarray(t, dtype=float)))


def junction(params: ModelParams) -> Junction:
    """Meeting point of the switch line and the singular arcs."""
    if params.t_hat <= 0:
        raise SeasonTooShortError(
            f"season too short: t_hat = T - ln2/a = {params.t_hat:.6g} <= 0"
        )
    return Junction(t_hat=params.t_hat, x_hat=params.x_hat, x_T=params.b / (4.0 * params.a))


def last_primary(t, params: ModelParams):
    """Coasting trajectory through (t_hat, x_hat), ending at b/(4a)."""
    return (params.b / (4.0 * params.a)) * np.exp(params.a * (params.T - np.asarray(t, dtype=float)))


def corner_admissible(t, params: ModelParams):
    """Whether a coasting departure from the switch line at t stays above it."""
    t_arr = np.asarray(t, dtype=float)
    coast_slope = -params.a * switch_line(t_arr, params)
    return coast_slope >= switch_line_slope(t_arr, params) - 1e-12 * params.b


def switch_line_tributary(t, t_s, params: ModelParams):
    """Feeding tributary reaching the switch line at t_s."""
    return arc_u1(t, t_s, switch_line(t_s, params), params)


# ---------------------------------------------------------------------------
# Singular controls and arc dynamics
# ---------------------------------------------------------------------------

def coop_singular_control(x, params: ModelParams):
    """u = 2ax/(2b + cx) on the cooperative arc."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("cooperative singular control needs x >= 0")
    u = 2.0 * params.a * x_arr / (2.0 * params.b + params.c * x_arr)
    return float(u) if u.ndim == 0 else u


def ess_singular_control(x, params: ModelParams):
    """u = (2ax - b)/(cx) on the ESS arc."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < params.x_hat * (1.0 - 1e-12)):
        raise DomainError(f"ESS singular control needs x >= x_hat = {params.x_hat:.6g}")
    u = (2.0 * params.a * x_arr - params.b) / (params.c * x_arr)
    u = np.maximum(u, 0.0)
    return float(u) if u.ndim == 0 else u


def coop_arc_rate(x, params: ModelParams):
    a, b, c = params.a, params.b, params.c
    x = np.asarray(x, dtype=float)
    return a * c * x * x / (b + 2.0 * c * x)


def ess_arc_rate(x, params: ModelParams):
    a, b, c = params.a, params.b, params.c
    x = np.asarray(x, dtype=float)
    return (a * c * x * x + b * (2.0 * a - c) * x - b * b) / (c * x)


def ess_fixed_point(params: ModelParams) -> float:
    """Positive root of ac x^2 + b(2a - c) x - b^2, the asymptote of the ESS arc."""
    a, b, c = params.a, params.b, params.c
    return (b / (2.0 * a * c)) * (c - 2.0 * a + math.sqrt(4.0 * a * a + c * c))


def coop_arc_time(x, params: ModelParams):
    """Time at which the cooperative arc passes through x, from separation of variables."""
    a, b, c = params.a, params.b, params.c
    x = np.asarray(x, dtype=float)
    x_hat = params.x_hat
    return params.t_hat - (2.0 * np.log(x_hat / x) + (b / c) * (1.0 / x - 1.0 / x_hat)) / a


def printed_arc_residual(x, t, params: ModelParams):
    """Residual of ln(x_hat/x) + (2b/c)(1/x_hat - 1/x) = a(t_hat - t); nonzero on the true arc."""
    x = np.asarray(x, dtype=float)
    x_hat = params.x_hat
    lhs = np.log(x_hat / x) + (2.0 * params.b / params.c) * (1.0 / x_hat - 1.0 / x)
    return lhs - params.a * (params.t_hat - np.asarray(t, dtype=float))


def lambert_w0(z, tol: float = 1e-15, max_iter: int = 100):
    """Principal branch of W for real z >= -1/e by Halley iteration."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z < -math.exp(-1.0) - 1e-15):
        raise DomainError("principal Lambert W needs z >= -1/e")
    log_z = np.log(np.maximum(z, math.e))
    w = np.where(z > math.e, log_z - np.log(log_z), np.log1p(np.maximum(z, -0.36)))
    near_branch = np.abs(z + math.exp(-1.0)) <= 0.3
    w = np.where(near_branch, np.sqrt(np.maximum(2.0 * math.e * z + 2.0, 0.0)) - 1.0, w)
    for _ in range(max_iter):
        ew = np.exp(w)
        f = w * ew - z
        w1 = w + 1.0
        w1 = np.where(w1 == 0.0, 1e-300, w1)
        dw = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1))
        w = w - dw
        if np.all(np.abs(dw) <= tol * (2.0 + np.abs(w))):
            break
    return float(w[0]) if w.size == 1 else w


def coop_arc_lambert(t, params: ModelParams):
    """Explicit cooperative arc x = (b/2c) / W0((a/c) exp(a(t_hat - t)/2 + a/c))."""
    a, b, c = params.a, params.b, params.c
    z = (a / c) * np.exp(a * (params.t_hat - np.asarray(t, dtype=float)) / 2.0 + a / c)
    return (b / (2.0 * c)) / lambert_w0(z)


# ---------------------------------------------------------------------------
# Singular arcs
# ---------------------------------------------------------------------------

@dataclass
class SingularArc:
    """Sampled singular arc, increasing in t, ending at (t_hat, x_hat)."""

    kind: FieldKind
    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    clamped: int = 0

    def switching_values(self, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
        """(sigma, sigma_m) of the copying mutant along the arc."""
        sigma = params.b * self.lam - params.c * self.mu - self.x
        sigma_m = params.b * self.lam - self.x
        return sigma, sigma_m


def integrate_singular_arc(kind, params: ModelParams, t_stop: float = 0.0,
                           samples: int = DEFAULT_BOUNDARY_SAMPLES) -> SingularArc:
    """Integrate the singular arc backward from (t_hat, x_hat) down to t_stop."""
    kind = FieldKind(kind)
    t_hat, x_hat = params.t_hat, params.x_hat
    if t_stop >= t_hat:
        raise DomainError(f"t_stop={t_stop:.6g} must precede t_hat={t_hat:.6g}")
    if samples < 2:
        raise ConfigurationError("singular arc needs at least two samples")
    a, b, c = params.a, params.b, params.c
    step = (t_hat - t_stop) / (samples - 1)

    if kind is FieldKind.COOPERATIVE:
        def rhs(t, y, u):
            return np.array([coop_arc_rate(y[0], params)])
        y0 = [x_hat]
    else:
        def rhs(t, y, u):
            x, lam, mu = y
            u_s = (2.0 * a * x - b) / (c * x)
            return np.array([ess_arc_rate(x, params), a * lam - 1.0 + u_s, (c * mu - b * lam) * u_s])
        y0 = [x_hat, 1.0 / (2.0 * a), 0.0]

    result = integrate(rhs, y0, t_hat, t_stop, 0.0, step)
    t = result.t[::-1].copy()
    y = result.y[::-1]
    x = y[:, 0].copy()

    clamped = 0
    if kind is FieldKind.COOPERATIVE:
        lam = 1.0 / a - x / b
        mu = b / (a * c) - 2.0 * x / c
        u = coop_singular_control(x, params)
    else:
        cap = ess_fixed_point(params) * (1.0 - ESS_CLAMP)
        over = x > cap
        clamped = int(np.count_nonzero(over))
        x[over] = cap
        lam = y[:, 1].copy()
        mu = y[:, 2].copy()
        u = np.maximum((2.0 * a * x - b) / (c * x), 0.0)
        if clamped:
            logger.debug(f"ESS arc clamped at x_bar on {clamped} samples")
    return SingularArc(kind=kind, t=t, x=x, lam=lam, mu=mu, u=u, clamped=clamped)


# ---------------------------------------------------------------------------
# Feedback fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyField:
    """Feedback u = phi(t, x) split by a boundary curve on [0, T]."""

    kind: FieldKind
    params: ModelParams
    band: float
    arc: Optional[SingularArc] = None
    curve: Optional[PchipInterpolator] = field(default=None, repr=False)

    @property
    def has_arc(self) -> bool:
        return self.arc is not None

    @property
    def split_time(self) -> float:
        """Time where the boundary changes from arc to switch line (0 without an arc)."""
        return self.params.t_hat if self.has_arc else 0.0

    def boundary(self, t):
        t_arr = np.asarray(t, dtype=float)
        p = self.params
        on_line = t_arr >= self.split_time
        line_t = np.clip(t_arr, p.t_hat, p.T)
        out = (p.b / p.a) * (-np.expm1(-p.a * (p.T - line_t)))
        if self.has_arc:
            arc_t = np.clip(t_arr, self.arc.t[0], p.t_hat)
            out = np.where(on_line, out, self.curve(arc_t))
        return float(out) if out.ndim == 0 else out

    def boundary_slope(self, t):
        t_arr = np.asarray(t, dtype=float)
        slope = switch_line_slope(np.clip(t_arr, self.params.t_hat, self.params.T), self.params)
        if self.has_arc:
            x = self.curve(np.clip(t_arr, self.arc.t[0], self.params.t_hat))
            slope = np.where(t_arr >= self.split_time, slope, self.arc_rate(x))
        return float(slope) if np.ndim(slope) == 0 else slope

    def arc_rate(self, x):
        if self.kind is FieldKind.COOPERATIVE:
            return coop_arc_rate(x, self.params)
        return ess_arc_rate(x, self.params)

    def singular_control(self, x):
        """Singular feedback on the arc, clipped to [0, 1] inside the band."""
        x = np.asarray(x, dtype=float)
        a, b, c = self.params.a, self.params.b, self.params.c
        if self.kind is FieldKind.COOPERATIVE:
            u = 2.0 * a * x / (2.0 * b + c * x)
        else:
            u = (2.0 * a * x - b) / (c * np.maximum(x, 1e-300))
        u = np.clip(u, 0.0, 1.0)
        return float(u) if u.ndim == 0 else u

    def regime(self, t, x):
        t_arr = np.asarray(t, dtype=float)
        x_arr = np.asarray(x, dtype=float)
        gap = x_arr - self.boundary(t_arr)
        out = np.where(gap < 0, FEED, COAST)
        out = np.where((np.abs(gap) <= self.band) & (t_arr < self.split_time), SINGULAR, out)
        out = np.where((np.abs(gap) <= self.band) & (t_arr >= self.split_time), COAST, out)
        return int(out) if out.ndim == 0 else out

    def control(self, t, x):
        """u = 0 above the boundary, 1 below, singular inside the band; ties coast."""
        regime = np.asarray(self.regime(t, x))
        u = np.where(regime == FEED, 1.0, 0.0)
        if np.any(regime == SINGULAR):
            u = np.where(regime == SINGULAR, self.singular_control(x), u)
        return float(u) if u.ndim == 0 else u

    def junction_slopes(self) -> Tuple[float, float]:
        """(left, right) boundary slopes at t_hat; left uses the arc dynamics at x_hat."""
        right = float(switch_line_slope(self.params.t_hat, self.params))
        if not self.has_arc:
            return right, right
        return float(self.arc_rate(self.params.x_hat)), right

    def is_smooth(self, tol: float = 1e-6) -> bool:
        left, right = self.junction_slopes()
        return abs(left - right) <= tol

    def sample_boundary(self, count: int = 1001) -> Tuple[np.ndarray, np.ndarray]:
        t = np.linspace(0.0, self.params.T, count)
        if self.has_arc:
            t = np.union1d(t, [self.params.t_hat])
        return t, self.boundary(t)


def build_field(kind, params: ModelParams, samples: int = DEFAULT_BOUNDARY_SAMPLES,
                band_factor: float = DEFAULT_BAND_FACTOR,
                allow_short_season: bool = False) -> StrategyField:
    """Assemble the singular arc on [0, t_hat] and the switch line on [t_hat, T]."""
    kind = FieldKind(kind)
    band = band_factor * params.b / params.a
    if params.t_hat <= 0:
        if not allow_short_season:
            junction(params)
        logger.warning(
            f"Short season (t_hat={params.t_hat:.6g}): {kind.value} field reduces to the switch line"
        )
        return StrategyField(kind=kind, params=params, band=band)

    if not params.long_season:
        logger.warning(
            f"T={params.T:.6g} does not exceed the long-season threshold "
            f"{params.long_season_threshold:.6g}; the field is built anyway"
        )
    arc = integrate_singular_arc(kind, params, 0.0, samples)
    curve = PchipInterpolator(arc.t, arc.x, extrapolate=True)
    built = StrategyField(kind=kind, params=params, band=band, arc=arc, curve=curve)
    left, right = built.junction_slopes()
    logger.info(
        f"Built {kind.value} field: t_hat={params.t_hat:.6f}, x(0)={arc.x[0]:.6f}, "
        f"junction slopes {left:.6g}/{right:.6g}"
    )
    return built


# ---------------------------------------------------------------------------
# Tributary sign checks
# ---------------------------------------------------------------------------

def sigma_on_u0_tributary(t, t_s, x_s, params: ModelParams):
    """sigma = 2 x_s (1 - cosh(a (t_s - t))) on coasting tributaries of the cooperative arc."""
    return 2.0 * x_s * (1.0 - np.cosh(params.a * (np.asarray(t_s) - np.asarray(t, dtype=float))))


def sigma_m_on_u0_ess_tributary(t, t_s, x_s, params: ModelParams):
    """sigma_m of the copying mutant on coasting tributaries of the ESS arc; <= 0 for x_s >= x_hat."""
    alpha = np.exp(-params.a * (np.asarray(t_s) - np.asarray(t, dtype=float)))
    return (params.b / params.a) * (1.0 - alpha) + x_s * (alpha - 1.0 / alpha)


@dataclass(frozen=True)
class TributaryAnchor:
    t_s: float
    x_s: float
    lam_s: float
    mu_s: float

    def alpha(self, t, params: ModelParams):
        return np.exp(-params.a * (self.t_s - np.asarray(t, dtype=float)))

    def gamma(self, t, params: ModelParams):
        return np.exp(-params.c * (self.t_s - np.asarray(t, dtype=float)))


def switch_line_anchor(t_s: float, params: ModelParams) -> TributaryAnchor:
    x_s = switch_line(t_s, params)
    return TributaryAnchor(t_s=float(t_s), x_s=x_s, lam_s=x_s / params.b, mu_s=0.0)


def arc_anchor(arc: SingularArc, index: int) -> TributaryAnchor:
    return TributaryAnchor(
        t_s=float(arc.t[index]), x_s=float(arc.x[index]),
        lam_s=float(arc.lam[index]), mu_s=float(arc.mu[index]),
    )


def feeding_adjoints(t, anchor: TributaryAnchor, params: ModelParams):
    """(x, lam, mu) on the u=1 tributary arriving at the anchor."""
    a, b, c = params.a, params.b, params.c
    t = np.asarray(t, dtype=float)
    alpha = anchor.alpha(t, params)
    gamma = anchor.gamma(t, params)
    x = arc_u1(t, anchor.t_s, anchor.x_s, params)
    lam = anchor.lam_s * alpha
    if params.degenerate:
        mu = anchor.mu_s * gamma + b * anchor.lam_s * (anchor.t_s - t) * gamma
    else:
        mu = anchor.mu_s * gamma + (b * anchor.lam_s / (c - a)) * (alpha - gamma)
    return x, lam, mu


def _check_anchor(anchor: TributaryAnchor, kind: AnchorKind, params: ModelParams) -> None:
    a, b, c = params.a, params.b, params.c
    tol = 1e-8 * max(1.0, abs(anchor.x_s))
    if kind is AnchorKind.SWITCH_LINE:
        expected = switch_line(anchor.t_s, params)
        if abs(anchor.x_s - expected) > tol or abs(anchor.x_s - b * anchor.lam_s) > tol or abs(anchor.mu_s) > tol:
            raise InvalidAnchorError(f"anchor {anchor} is not on the switch line")
    elif kind is AnchorKind.COOP_ARC:
        if abs(anchor.lam_s - (1.0 / a - anchor.x_s / b)) > tol or abs(anchor.mu_s - (b / (a * c) - 2.0 * anchor.x_s / c)) > tol:
            raise InvalidAnchorError(f"anchor {anchor} violates the cooperative arc adjoints")
        if not (0.0 < anchor.x_s <= params.x_hat * (1.0 + 1e-12)):
            raise InvalidAnchorError(f"anchor x_s={anchor.x_s} outside (0, x_hat]")
    else:
        if abs(b * anchor.lam_s - anchor.x_s) > tol:
            raise InvalidAnchorError(f"anchor {anchor} violates b*lam = x on the ESS arc")
        if not (params.x_hat * (1.0 - 1e-9) <= anchor.x_s <= ess_fixed_point(params)):
            raise InvalidAnchorError(f"anchor x_s={anchor.x_s} outside [x_hat, x_bar]")


@dataclass
class TributarySignReport:
    kind: AnchorKind
    t_s: float
    x_s: float
    window: Tuple[float, float]
    L_at_anchor: float
    literal_L_at_anchor: float
    L_max: float
    L_rate_min: float
    sigma_min: float
    max_disagreement: float
    passed: bool
    failures: List[str] = field(default_factory=list)


def verify_tributary_sign(anchor: TributaryAnchor, kind, params: ModelParams,
                          points: int = 41, steps: int = 2000,
                          agreement_tol: float = 1e-7) -> TributarySignReport:
    """Check the sign of L and of the switching value on the u=1 tributary of an anchor.

    Switch-line and cooperative-arc anchors use the resident value
    sigma = b*lam - c*mu - x with L = ab*lam + ax - b and the weight
    e^{-c(tau - t)}. ESS-arc anchors use the copying mutant value
    sigma_m = b*lam - x with L_m = ab*lam + (a - c)x - b and no weight.
    """
    kind = AnchorKind(kind)
    _check_anchor(anchor, kind, params)
    a, b, c = params.a, params.b, params.c
    resident = kind is not AnchorKind.ESS_ARC
    t_s = anchor.t_s

    def L_of(t):
        x, lam, _ = feeding_adjoints(t, anchor, params)
        drift = a if resident else a - c
        return a * b * lam + drift * x - b

    def L_rate(t):
        x, lam, _ = feeding_adjoints(t, anchor, params)
        x_dot = (c - a) * x + b
        drift = a if resident else a - c
        return a * a * b * lam + drift * x_dot

    # tributary window: feeding backward from the anchor while x stays non-negative
    start = 0.0
    if arc_u1(0.0, t_s, anchor.x_s, params) < 0:
        start = brentq(lambda s: arc_u1(s, t_s, anchor.x_s, params), 0.0, t_s, xtol=1e-14)
    failures: List[str] = []
    literal_L = a * b * anchor.lam_s + a * anchor.x_s - b
    L_s = float(L_of(t_s))

    if t_s - start <= 1e-9:
        return TributarySignReport(kind, t_s, anchor.x_s, (start, t_s), L_s, literal_L,
                                   L_s, float(L_rate(t_s)), math.inf, 0.0, L_s <= 1e-12)

    step = (t_s - start) / steps
    if resident:
        def rhs(t, y, u):
            x, lam, mu = y
            return np.array([(c - a) * x + b, a * lam, c * mu - b * lam])
    else:
        def rhs(t, y, u):
            x, lam = y
            return np.array([(c - a) * x + b, a * lam])
    y0 = [anchor.x_s, anchor.lam_s, anchor.mu_s] if resident else [anchor.x_s, anchor.lam_s]
    direct = integrate(rhs, y0, t_s, start, 1.0, step)

    stride = max(1, (direct.t.size - 1) // (points - 1))
    idx = np.arange(stride, direct.t.size, stride)
    t_check = direct.t[idx]
    y_check = direct.y[idx]
    if resident:
        sigma_direct = b * y_check[:, 1] - c * y_check[:, 2] - y_check[:, 0]
    else:
        sigma_direct = b * y_check[:, 1] - y_check[:, 0]

    sigma_formula = np.empty_like(t_check)
    for k, t in enumerate(t_check):
        if resident:
            value, _ = quad(lambda tau: math.exp(-c * (tau - t)) * L_of(tau), t, t_s,
                            epsabs=1e-14, epsrel=1e-12, limit=200)
        else:
            value, _ = quad(L_of, t, t_s, epsabs=1e-14, epsrel=1e-12, limit=200)
        sigma_formula[k] = -value

    interior = np.linspace(start, t_s, points)[:-1]
    L_max = float(np.max(L_of(interior)))
    L_rate_min = float(np.min(L_rate(np.linspace(start, t_s, points))))
    sigma_min = float(np.min(sigma_formula))
    disagreement = float(np.max(np.abs(sigma_formula - sigma_direct)))

    if L_s > 1e-10:
        failures.append(f"L(t_s)={L_s:.3e} > 0")
    if L_max >= 0:
        failures.append(f"L reaches {L_max:.3e} before the anchor")
    if resident and L_rate_min <= 0:
        failures.append(f"L is not increasing (min rate {L_rate_min:.3e})")
    if sigma_min <= 0:
        failures.append(f"switching value reaches {sigma_min:.3e}")
    if disagreement > agreement_tol:
        failures.append(f"integral and adjoint values differ by {disagreement:.3e}")

    report = TributarySignReport(
        kind=kind, t_s=t_s, x_s=anchor.x_s, window=(start, t_s),
        L_at_anchor=L_s, literal_L_at_anchor=literal_L, L_max=L_max,
        L_rate_min=L_rate_min, sigma_min=sigma_min,
        max_disagreement=disagreement, passed=not failures, failures=failures,
    )
    if failures:
        logger.debug(f"Tributary check at t_s={t_s:.6f} ({kind.value}) failed: {'; '.join(failures)}")
    return report


def sample_anchors(kind, params: ModelParams, count: int, arc: Optional[SingularArc] = None) -> List[TributaryAnchor]:
    """Evenly spread anchors on the switch line or along a singular arc."""
    kind = AnchorKind(kind)
    if kind is AnchorKind.SWITCH_LINE:
        times = np.linspace(params.t_hat, params.T, count + 1)[:-1]
        return [switch_line_anchor(t, params) for t in times]
    if arc is None:
        arc_kind = FieldKind.COOPERATIVE if kind is AnchorKind.COOP_ARC else FieldKind.ESS
        arc = integrate_singular_arc(arc_kind, params)
    lo = np.searchsorted(arc.t, 0.05 * params.t_hat)
    idx = np.unique(np.linspace(lo, arc.t.size - 1, count).round().astype(int))
    return [arc_anchor(arc, int(i)) for i in idx]
