"""Closed-form quantities of the model: slope, bump, barriers, thresholds,
predicted tail shapes and the critical exponent.

Predicted tails are shapes without constants; callers compare ratios and
slopes only.
"""

import math
from typing import Dict

import numpy as np

from exceptions import DomainError
from models import BarrierKind, BarrierSpec

# Coefficient of the bump term in the upper barrier, used verbatim
BUMP_COEFFICIENT_NUMERATOR = 11.0


def _check_t_alpha(t: int, alpha: float) -> None:
    if int(t) != t or t < 2:
        raise DomainError(f"t must be an integer >= 2, got {t}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def theta(t: int, alpha: float) -> float:
    return t ** (-alpha)


def _log_correction(t: int, alpha: float) -> float:
    return (1.0 + 2.0 * alpha) / (4.0 * math.sqrt(1.0 + theta(t, alpha)))


def slope_mu(t: int, alpha: float) -> float:
    """mu = sqrt(1+theta) - ((1+2 alpha) / (4 sqrt(1+theta))) log t / t"""
    _check_t_alpha(t, alpha)
    return math.sqrt(1.0 + theta(t, alpha)) - _log_correction(t, alpha) * math.log(t) / t


def bump_psi(k: int, t: int) -> float:
    if k < 0 or k > t:
        raise DomainError(f"k={k} outside [0, {t}]")
    if k == 0 or k == t:
        return 0.0
    return math.log(min(k, t - k))


def make_barrier(kind: BarrierKind, t: int, alpha: float, offset: float) -> BarrierSpec:
    return BarrierSpec(kind=kind, mu=slope_mu(t, alpha), t=t, alpha=alpha, offset=offset)


def barrier(spec: BarrierSpec, k: int) -> float:
    """Barrier height at integer scale k"""
    if int(k) != k or k < 0 or k > spec.t:
        raise DomainError(f"barrier scale k={k} outside the integers 0..{spec.t}")
    decay = (1.0 - k / spec.t) * spec.t ** (1.0 - spec.alpha)
    base = spec.mu * k + decay + spec.offset + 1.0
    if spec.kind == BarrierKind.UPPER:
        return base + (BUMP_COEFFICIENT_NUMERATOR / (4.0 * spec.alpha)) * bump_psi(k, spec.t)
    return base


def barrier_values(spec: BarrierSpec) -> np.ndarray:
    """Barrier at k = 0..t"""
    return np.array([barrier(spec, k) for k in range(spec.t + 1)])


def threshold_log_max(t: int, alpha: float, y: float) -> float:
    """Log-scale threshold sqrt(1+theta) t - ((1+2 alpha)/(4 sqrt(1+theta))) log t + y"""
    _check_t_alpha(t, alpha)
    return math.sqrt(1.0 + theta(t, alpha)) * t - _log_correction(t, alpha) * math.log(t) + y


def predicted_right_tail(t: int, alpha: float, y: float) -> float:
    if y < 0:
        raise DomainError(f"right tail needs y >= 0, got {y}; use predicted_left_tail")
    th = theta(t, alpha)
    prefactor = 1.0 + y / t ** (1.0 - alpha)
    return prefactor * math.exp(-2.0 * math.sqrt(1.0 + th) * y) * math.exp(-y * y / t)


def right_tail_prefactors(t: int, alpha: float, y: float) -> Dict[str, float]:
    """Prefactor variants on either side of y ~ t^(1-alpha).

    "interpolating" is (1 + y/t^(1-alpha)); "flat" drops it. At small t the
    two regimes overlap, so reports fit against both.
    """
    return {
        "interpolating": 1.0 + y / t ** (1.0 - alpha),
        "flat": 1.0,
    }


def predicted_left_tail(t: int, alpha: float, y: float) -> float:
    """Envelope of 1 - P(max > threshold) for y < 0"""
    if y >= 0:
        raise DomainError(f"left tail needs y < 0, got {y}")
    return math.exp(2.0 * math.sqrt(1.0 + theta(t, alpha)) * y) / (1.0 - y)


def critical_beta(t: int, alpha: float) -> float:
    _check_t_alpha(t, alpha)
    return 2.0 * math.sqrt(1.0 + theta(t, alpha))


def moment_normalization(t: int, alpha: float, beta: float) -> float:
    """log of exp((beta^2/4) t - (alpha - 1/2) log t)"""
    return beta * beta / 4.0 * t - (alpha - 0.5) * math.log(t)
