"""Numerical oracles for Gaussian random walks under barriers.

``ballot_dp`` propagates the sub-barrier law of the walk on a value grid;
``ballot_mc`` simulates walks directly. Both evaluate
P(S_l <= b(l) for 1 <= l <= j, S_j in I_x) and serve as cross-checks for
the ballot envelopes and the Gaussian comparison inequality.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from config import settings
from exceptions import DomainError, HypothesisViolatedError, QuadratureError, ResolutionError
from models import BallotCheckReport, BallotQuery, ComparisonQuery, ComparisonResult, RichardsonResult
from prediction import bump_psi
from stats_core import rng_stream

logger = logging.getLogger(__name__)

RICHARDSON_TOLERANCE = 1e-4
_KERNEL_SDS = 8.0
_MC_CHUNK = 100_000
_QUAD_TOL = 1e-12
_C_MAX = 10.0


class LinearSweepPoint(BaseModel):
    """One point of a linear-barrier sweep, barrier b(l) = a l + b0"""
    j: int = Field(ge=1)
    a: float
    b0: float
    x: float
    delta: float = Field(default=1.0, gt=0.0, le=1.0)
    sigma2: float = Field(default=0.5, gt=0.0)

    def barrier_at(self, step: int) -> float:
        return self.a * step + self.b0


def linear_barrier_query(point: LinearSweepPoint, c: float = 2.0) -> BallotQuery:
    steps = np.arange(1, point.j + 1, dtype=np.float64)
    return BallotQuery(
        j=point.j,
        sigma2=np.full(point.j, point.sigma2),
        barrier_values=point.a * steps + point.b0,
        x=point.x,
        delta=point.delta,
        c=max(c, point.sigma2, 1.0 / point.sigma2),
    )


def log_barrier_query(t: int, k: int, y: float, x: float, delta: float = 1.0) -> BallotQuery:
    """Walk of variance 1/2 under y + psi_j for r < j <= k, with |S_r| <= 3r at r = ceil(y)"""
    if not 1 <= k <= t:
        raise DomainError(f"k={k} outside 1..{t}")
    r = max(0, math.ceil(y))
    upper = np.full(k, np.inf)
    lower = np.full(k, -np.inf)
    for step in range(1, k + 1):
        if step > r:
            upper[step - 1] = y + bump_psi(step, t)
        elif step == r:
            upper[step - 1] = 3.0 * r
            lower[step - 1] = -3.0 * r
    return BallotQuery(
        j=k,
        sigma2=np.full(k, 0.5),
        barrier_values=upper,
        lower_values=lower,
        x=x,
        delta=delta,
    )


def _step_kernel(sigma2: float, h: float) -> np.ndarray:
    """Cell probabilities of one increment; the variance is reduced by h^2/12
    so the discretized kernel keeps the increment variance"""
    sd = math.sqrt(sigma2 - h * h / 12.0)
    half = math.ceil(_KERNEL_SDS * math.sqrt(sigma2) / h)
    d = np.arange(-half, half + 1, dtype=np.float64)
    return norm.cdf((d + 0.5) * h / sd) - norm.cdf((d - 0.5) * h / sd)


def _interval_mass(mass: np.ndarray, points: np.ndarray, sd: float, lo: float, hi: float) -> float:
    """Mass landing in [lo, hi] after one N(0, sd^2) step from every point"""
    if not hi > lo:
        return 0.0
    return float(mass @ (norm.cdf((hi - points) / sd) - norm.cdf((lo - points) / sd)))


def _truncate(new: np.ndarray, old: np.ndarray, points: np.ndarray, h: float, sd: float,
              upper: float, lower: float) -> None:
    cell_lo = points - h / 2.0
    cell_hi = points + h / 2.0
    new[(cell_lo >= upper) | (cell_hi <= lower)] = 0.0
    straddle = np.flatnonzero(((cell_lo < upper) & (upper < cell_hi)) | ((cell_lo < lower) & (lower < cell_hi)))
    for c in straddle:
        new[c] = _interval_mass(old, points, sd, max(cell_lo[c], lower), min(cell_hi[c], upper))


def ballot_dp(q: BallotQuery, grid_step: Optional[float] = None, grid_extent: Optional[float] = None) -> float:
    """Sub-barrier probability by iterated Gaussian convolution on a value grid.

    The walk starts as a point mass at 0. Each of the first j-1 steps
    convolves with the cell kernel and zeroes the mass outside the
    barriers, recomputing cells cut by a barrier exactly. The last step
    integrates the Gaussian transition into I_x within the barriers, so
    j = 1 is exact.
    """
    sigma = np.sqrt(q.sigma2)
    total_sd = math.sqrt(math.fsum(q.sigma2))
    h = grid_step or math.sqrt(0.5) / settings.ballot_step_divisor
    extent = grid_extent or settings.ballot_extent_sds * total_sd
    if h > sigma.min() / 8.0 * (1.0 + 1e-12):
        raise ResolutionError(f"grid_step={h} exceeds min sigma / 8 = {sigma.min() / 8.0}")
    if extent < 8.0 * total_sd * (1.0 - 1e-12):
        raise ResolutionError(f"grid_extent={extent} is below 8 terminal standard deviations ({8.0 * total_sd})")

    lower_values = q.lower_values if q.lower_values is not None else np.full(q.j, -np.inf)
    x_lo, x_hi = q.window()
    i_lo = math.floor((min(0.0, x_lo) - extent) / h)
    i_hi = math.ceil((max(0.0, x_hi) + extent) / h)
    points = np.arange(i_lo, i_hi + 1, dtype=np.float64) * h
    mass = np.zeros(points.size)
    mass[-i_lo] = 1.0

    for step in range(q.j - 1):
        kernel = _step_kernel(float(q.sigma2[step]), h)
        half = (kernel.size - 1) // 2
        new = np.convolve(mass, kernel)[half:half + mass.size]
        _truncate(new, mass, points, h, float(sigma[step]),
                  float(q.barrier_values[step]), float(lower_values[step]))
        mass = new

    lo = max(x_lo, float(lower_values[-1]))
    hi = min(x_hi, float(q.barrier_values[-1]))
    return min(1.0, max(0.0, _interval_mass(mass, points, float(sigma[-1]), lo, hi)))


def ballot_dp_richardson(q: BallotQuery, grid_step: Optional[float] = None,
                         grid_extent: Optional[float] = None) -> RichardsonResult:
    """Compare the DP at step h and h/2"""
    h = grid_step or math.sqrt(0.5) / settings.ballot_step_divisor
    coarse = ballot_dp(q, h, grid_extent)
    fine = ballot_dp(q, h / 2.0, grid_extent)
    difference = fine - coarse
    return RichardsonResult(
        coarse=coarse,
        fine=fine,
        difference=difference,
        extrapolated=fine + difference / 3.0,
        converged=abs(difference) < RICHARDSON_TOLERANCE,
    )


def _in_window(values: np.ndarray, x: float, delta: float) -> np.ndarray:
    if x > 0:
        return (values > x) & (values <= x + delta)
    if x < 0:
        return (values > x - delta) & (values <= x)
    return (values >= -delta) & (values <= delta)


def ballot_mc(q: BallotQuery, n: int, seed: int) -> Tuple[float, float]:
    """Hit fraction of n simulated walks and its binomial standard error"""
    if n < 1000:
        raise DomainError(f"ballot_mc needs n >= 1000, got {n}")
    sigma = np.sqrt(q.sigma2)
    lower_values = q.lower_values if q.lower_values is not None else np.full(q.j, -np.inf)
    rng = rng_stream(seed, "ballot-mc")

    hits = 0
    for start in range(0, n, _MC_CHUNK):
        size = min(_MC_CHUNK, n - start)
        walks = np.cumsum(rng.standard_normal((size, q.j)) * sigma, axis=1)
        ok = np.all(walks <= q.barrier_values, axis=1) & np.all(walks >= lower_values, axis=1)
        ok &= _in_window(walks[:, -1], q.x, q.delta)
        hits += int(np.count_nonzero(ok))
    p = hits / n
    return p, math.sqrt(p * (1.0 - p) / n)


def _linear_hypotheses(point: LinearSweepPoint, bound_kind: str) -> None:
    bj = point.barrier_at(point.j)
    if bound_kind == "lower":
        if (bj - point.x) * point.b0 > point.j:
            raise HypothesisViolatedError(f"(b(j)-x) b(0) = {(bj - point.x) * point.b0:.4g} exceeds j={point.j}")
        if point.b0 <= 0 or bj - point.x <= 0:
            raise HypothesisViolatedError("lower envelope is not positive (need b(0) > 0 and x < b(j))")
    elif bound_kind == "upper":
        if point.b0 <= 0:
            raise HypothesisViolatedError(f"b(0)={point.b0} must be positive")
        if point.x > bj:
            raise HypothesisViolatedError(f"x={point.x} exceeds b(j)={bj}")
        if point.sigma2 != 0.5:
            raise HypothesisViolatedError(f"upper bound needs variance 1/2, got {point.sigma2}")
    else:
        raise DomainError(f"bound_kind must be 'lower' or 'upper', got {bound_kind}")


def _linear_envelope(point: LinearSweepPoint, bound_kind: str) -> float:
    bj = point.barrier_at(point.j)
    if bound_kind == "lower":
        # exponential factor e^(-c x^2 / j) is applied after fitting c
        return point.b0 * (bj - point.x) / point.j ** 1.5 * point.delta
    return (point.b0 + 1.0) * (bj - point.x + 1.0) / point.j ** 1.5


def _map_queries(fn: Callable, items: Sequence) -> List:
    with ThreadPoolExecutor(max_workers=settings.worker_count) as pool:
        return list(pool.map(fn, items))


def _log_spread(log_ratios: np.ndarray) -> float:
    return float(log_ratios.max() - log_ratios.min())


def check_prop_linear(sweep: Sequence[LinearSweepPoint], bound_kind: str) -> BallotCheckReport:
    """Ratio of DP probability to the linear-barrier envelope over a sweep.

    bound_kind "lower" uses b(0)(b(j)-x) delta e^(-c x^2/j) / j^(3/2) and
    fits c >= 1 to make the ratios as uniform as possible; "upper" uses
    (b(0)+1)(b(j)-x+1) / j^(3/2).
    """
    proposition = "linear-lower" if bound_kind == "lower" else "linear-upper"
    report = BallotCheckReport(proposition=proposition)
    valid: List[LinearSweepPoint] = []
    for point in sweep:
        try:
            _linear_hypotheses(point, bound_kind)
            valid.append(point)
        except HypothesisViolatedError as e:
            logger.warning(f"Skipping sweep point {point.model_dump()}: {e}")
            report.skipped.append(f"j={point.j}, a={point.a}, b0={point.b0}, x={point.x}: {e}")
    if not valid:
        raise HypothesisViolatedError(f"no sweep point satisfies the {proposition} hypotheses")

    dp_values = np.array(_map_queries(lambda p: ballot_dp(linear_barrier_query(p)), valid))
    envelopes = np.array([_linear_envelope(p, bound_kind) for p in valid])
    ratios = dp_values / envelopes

    if bound_kind == "lower":
        spread_x = np.array([p.x ** 2 / p.j for p in valid])
        positive = dp_values > 0
        if positive.sum() >= 2:
            log_base = np.log(ratios[positive])
            fit = minimize_scalar(lambda c: _log_spread(log_base + (c - 1.0) * spread_x[positive]),
                                  bounds=(1.0, _C_MAX), method="bounded")
            report.fitted_c = float(fit.x)
        else:
            report.fitted_c = 1.0
        envelopes = envelopes * np.exp(-report.fitted_c * spread_x)
        ratios = dp_values / envelopes

    for point, dp, env, ratio in zip(valid, dp_values, envelopes, ratios):
        report.rows.append({
            **point.model_dump(),
            "barrier_j": point.barrier_at(point.j),
            "dp": float(dp),
            "envelope": float(env),
            "ratio": float(ratio),
        })
    report.min_ratio = float(ratios.min())
    report.max_ratio = float(ratios.max())
    report.spread = report.max_ratio / report.min_ratio if report.min_ratio > 0 else math.inf
    return report


def _log_hypotheses(t: int, k: int, y: float, x: float) -> None:
    if not t / math.log(t) <= k <= t:
        raise HypothesisViolatedError(f"k={k} outside [t/log t, t] = [{t / math.log(t):.3f}, {t}]")
    if y > t / (10.0 * math.log(t)):
        raise HypothesisViolatedError(f"y={y} exceeds t/(10 log t) = {t / (10.0 * math.log(t)):.3f}")
    if not (-20.0 * k < x <= bump_psi(k, t)):
        raise HypothesisViolatedError(f"x={x} outside (-20k, psi_k] = ({-20 * k}, {bump_psi(k, t):.4f}]")


def log_envelope(t: int, k: int, y: float, x: float) -> float:
    psi = bump_psi(k, t)
    return (y + 1.0) * (y + psi - x + 1.0) / k ** 1.5 * math.exp(-x * x / k)


def check_prop_log(t: int, k_sweep: Sequence[int], y: float, x_values: Sequence[float] = (0.0,),
                   delta: float = 1.0) -> BallotCheckReport:
    """DP probability under the logarithmic barrier against its envelope"""
    if t < 2:
        raise DomainError(f"t must be at least 2, got {t}")
    report = BallotCheckReport(proposition="log")
    valid: List[Tuple[int, float]] = []
    for k in k_sweep:
        for x in x_values:
            try:
                _log_hypotheses(t, k, y, x)
                valid.append((k, x))
            except HypothesisViolatedError as e:
                logger.warning(f"Skipping k={k}, x={x}: {e}")
                report.skipped.append(f"k={k}, x={x}: {e}")
    if not valid:
        raise HypothesisViolatedError("no sweep point satisfies the logarithmic-barrier hypotheses")

    dp_values = _map_queries(lambda kx: ballot_dp(log_barrier_query(t, kx[0], y, kx[1], delta)), valid)
    ratios = []
    for (k, x), dp in zip(valid, dp_values):
        env = log_envelope(t, k, y, x)
        ratios.append(dp / env)
        report.rows.append({"t": t, "k": k, "y": y, "x": x, "delta": delta,
                            "dp": dp, "envelope": env, "ratio": dp / env})
    report.min_ratio = float(min(ratios))
    report.max_ratio = float(max(ratios))
    report.spread = report.max_ratio / report.min_ratio if report.min_ratio > 0 else math.inf
    return report


def _rectangle_probability(s2: float, rho: float, rect) -> float:
    s = math.sqrt(s2)
    r = rho / s2
    sc = math.sqrt(s2 * (1.0 - r * r))

    def integrand(x: float) -> float:
        return norm.pdf(x, scale=s) * (norm.cdf((rect.y_hi - r * x) / sc) - norm.cdf((rect.y_lo - r * x) / sc))

    value, abserr = quad(integrand, rect.x_lo, rect.x_hi, epsabs=_QUAD_TOL, limit=200)
    if abserr > 1e-8:
        raise QuadratureError(f"rectangle probability error estimate {abserr:.2e} above 1e-8")
    return min(1.0, max(0.0, value))


def comparison_factor(s2: float, rho: float) -> float:
    return math.sqrt((s2 + abs(rho)) / (s2 - abs(rho)))


def orthant_probability(s2: float, rho: float) -> float:
    """P(N <= 0, N' <= 0) for a centered pair with variance s2 and covariance rho"""
    return 0.25 + math.asin(rho / s2) / (2.0 * math.pi)


def gaussian_comparison_check(q: ComparisonQuery) -> ComparisonResult:
    """P((N1, N1') in A) <= sqrt((s2+|rho|)/(s2-|rho|)) P((N2, N2') in A) on a rectangle A

    (N1, N1') has variance s2 and covariance rho; (N2, N2') is the independent
    pair with variance s2 + |rho|, so its covariance dominates the first one.
    """
    lhs = _rectangle_probability(q.s2, q.rho, q.rectangle)
    independent = _rectangle_probability(q.s2 + abs(q.rho), 0.0, q.rectangle)
    factor = comparison_factor(q.s2, q.rho)
    rhs = factor * independent
    return ComparisonResult(lhs=lhs, rhs=rhs, factor=factor, holds=lhs <= rhs * (1.0 + 1e-12) + 1e-15)
