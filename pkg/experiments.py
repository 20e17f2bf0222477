"""Monte Carlo experiments on the sampled field.

Every experiment reduces batches of samples to small per-batch results in
index order, so reports depend only on (config, seed, n).
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid
from scipy.special import logsumexp
from scipy.stats import norm, spearmanr

from covariance_engine import toeplitz_on_lags
from exceptions import ConfigError, DomainError
from field_sampler import FieldSampler
from models import (
    BandTable,
    BarrierKind,
    BarrierSpec,
    CountReport,
    FieldSample,
    HittingReport,
    ModelConfig,
    MomentReport,
    PairCorrelationBin,
    PairCorrelationReport,
    SamplingMode,
    TailReport,
    ToeplitzCovariance,
)
from prediction import (
    barrier_values,
    critical_beta,
    make_barrier,
    moment_normalization,
    predicted_left_tail,
    predicted_right_tail,
    right_tail_prefactors,
    slope_mu,
    theta,
    threshold_log_max,
)
from stats_core import binomial_stderr, bootstrap_ci, bootstrap_ratio, wilson_interval, wls_line

logger = logging.getLogger(__name__)

MIN_HITS = 20
MIN_TAIL_SAMPLES = 10_000
DEFAULT_DELTA = 1.0
SMALL_INTERVAL_HALF_POINTS = 8
BY_PARTS_POINTS = 20_000


def _partials(increments: np.ndarray) -> np.ndarray:
    """(batch, t, n) increments to partial sums S_1..S_t"""
    return np.cumsum(increments, axis=1)


def trapezoid_weights(points: np.ndarray) -> Tuple[np.ndarray, float]:
    """Trapezoid weights on the grid and the grid span they integrate over"""
    if points.size == 1:
        return np.ones(1), 1.0
    weights = np.empty(points.size)
    gaps = np.diff(points)
    weights[0] = gaps[0] / 2.0
    weights[-1] = gaps[-1] / 2.0
    weights[1:-1] = (gaps[:-1] + gaps[1:]) / 2.0
    return weights, float(points[-1] - points[0])


def log_moment_values(field: np.ndarray, beta: float, points: np.ndarray) -> np.ndarray:
    """log of the normalized trapezoid integral of exp(beta S_t), per row"""
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    weights, span = trapezoid_weights(points)
    return logsumexp(beta * np.atleast_2d(field), b=weights, axis=-1) - math.log(span)


def moment_integral(sample: FieldSample, beta: float) -> float:
    """log Z_beta for one sample"""
    return float(log_moment_values(sample.partials(sample.t), beta, sample.points)[0])


def _good_event_barrier(config: ModelConfig, A: float) -> np.ndarray:
    """M_A(1..t)"""
    if A <= 0:
        raise DomainError(f"A must be positive, got {A}")
    return barrier_values(make_barrier(BarrierKind.GOOD_EVENT, config.t, config.alpha, A))[1:]


def good_event_flag(sample: FieldSample, A: float, config: ModelConfig) -> bool:
    """True iff max_h S_j(h) <= M_A(j) at every scale j"""
    maxima = sample.all_partials().max(axis=1)
    return bool(np.all(maxima <= _good_event_barrier(config, A)))


def high_point_measure(sample: FieldSample, V: float, A: float, config: ModelConfig,
                       barrier_enabled: bool = True) -> float:
    """Normalized measure of {h : S_t(h) > V, S_k(h) <= M_A(k) for all k}"""
    partials = sample.all_partials()
    keep = partials[-1] > V
    if barrier_enabled:
        keep &= np.all(partials <= _good_event_barrier(config, A)[:, None], axis=0)
    weights, span = trapezoid_weights(sample.points)
    return min(1.0, float(weights[keep].sum() / span))


def moment_by_parts(sample: FieldSample, beta: float, n_levels: int = BY_PARTS_POINTS) -> Dict[str, float]:
    """Z_beta two ways: directly, and as e^(beta V0) S(V0) + beta * int e^(beta V) S(V) dV.

    S(V) is the normalized measure of {S_t > V} without barrier; V0 sits
    below the sample minimum, where S(V0) = 1.
    """
    field = sample.partials(sample.t)
    direct = float(log_moment_values(field, beta, sample.points)[0])

    weights, span = trapezoid_weights(sample.points)
    order = np.argsort(field)
    values = field[order]
    tail_mass = np.concatenate([np.cumsum(weights[order][::-1])[::-1], [0.0]]) / span

    v_lo = float(values[0]) - 1.0
    v_hi = float(values[-1])
    levels = np.linspace(v_lo, v_hi, n_levels)
    measure = tail_mass[np.searchsorted(values, levels, side="right")]
    scaled = np.exp(beta * (levels - v_hi))
    by_parts = scaled[0] * measure[0] + beta * trapezoid(scaled * measure, levels)
    log_by_parts = math.log(by_parts) + beta * v_hi
    return {
        "log_direct": direct,
        "log_by_parts": log_by_parts,
        "relative_error": abs(math.expm1(log_by_parts - direct)),
    }


class ExperimentRunner:
    """Experiments for one configuration and one sampler"""

    def __init__(self, config: ModelConfig, sampler: FieldSampler, bands: BandTable,
                 covariances: Optional[Sequence[ToeplitzCovariance]] = None):
        self.config = config
        self.sampler = sampler
        self.bands = bands
        self.covariances = list(covariances) if covariances is not None else None
        self.points = sampler.points
        self.band_variances = bands.variances()
        self._maxima_cache: Dict[int, np.ndarray] = {}

    @property
    def total_variance(self) -> float:
        return math.fsum(self.band_variances)

    @property
    def approximate(self) -> bool:
        return self.config.mode == SamplingMode.SURROGATE

    def _config_dump(self) -> Dict:
        return self.config.model_dump(mode="json")

    def scale_maxima(self, n: int) -> np.ndarray:
        """max_h S_j(h) for j = 1..t, shape (n, t); cached per n"""
        if n not in self._maxima_cache:
            parts = self.sampler.map_batches(lambda inc, start: _partials(inc).max(axis=2), n, desc="maxima")
            self._maxima_cache[n] = np.concatenate(parts)
        return self._maxima_cache[n]

    def _tail_report(self, tail: str, maxima: np.ndarray, y_grid: Sequence[float], thresholds: np.ndarray,
                     predicted: List[float], n: int) -> TailReport:
        hits = [int(np.count_nonzero(maxima > thr)) for thr in thresholds]
        intervals = [wilson_interval(h, n) for h in hits]
        return TailReport(
            tail=tail,
            y_grid=[float(y) for y in y_grid],
            thresholds=[float(x) for x in thresholds],
            hits=hits,
            n=n,
            p_hat=[h / n for h in hits],
            ci_lo=[ci.lo for ci in intervals],
            ci_hi=[ci.hi for ci in intervals],
            predicted_shape=predicted,
            seed=self.config.seed,
            config=self._config_dump(),
            approximate=self.approximate,
        )

    def _fit(self, x: np.ndarray, counts: np.ndarray, n: int) -> Tuple[Optional[Tuple[float, float, float]], np.ndarray]:
        """WLS of log(counts/n) on x over points with at least MIN_HITS counts"""
        keep = counts >= MIN_HITS
        if keep.sum() < 3:
            return None, keep
        p = counts[keep] / n
        return wls_line(x[keep], np.log(p), _tail_weights(counts[keep], n)), keep

    def estimate_right_tail(self, y_grid: Sequence[float], n: int, threshold_shift: float = 0.0) -> TailReport:
        """P(max_h S_t(h) > threshold(y)) against (1 + y/t^(1-alpha)) e^(-2 sqrt(1+theta) y) e^(-y^2/t)"""
        y = np.asarray(y_grid, dtype=np.float64)
        if y.size == 0 or np.any(y < 0) or np.any(np.diff(y) < 0):
            raise DomainError("y_grid must be nonempty, nonnegative and ascending")
        if n < MIN_TAIL_SAMPLES:
            raise DomainError(f"tail estimates need n >= {MIN_TAIL_SAMPLES}, got {n}")

        t, alpha = self.config.t, self.config.alpha
        thresholds = np.array([threshold_log_max(t, alpha, v) for v in y]) + threshold_shift
        maxima = self.scale_maxima(n)[:, -1]
        report = self._tail_report("right", maxima, y, thresholds,
                                   [predicted_right_tail(t, alpha, v) for v in y], n)
        report.predicted_slope = -2.0 * math.sqrt(1.0 + theta(t, alpha))

        counts = np.array(report.hits)
        fit, keep = self._fit(y, counts, n)
        report.dropped_y = [float(v) for v in y[~keep]]
        if report.dropped_y:
            logger.warning(f"Dropped y={report.dropped_y} from the slope fit (fewer than {MIN_HITS} hits)")
        if fit is not None:
            report.fitted_slope, _, report.fitted_slope_stderr = fit
            log_p = np.log(counts[keep] / n)
            corrected = {}
            for name in ("interpolating", "flat"):
                prefactor = np.array([right_tail_prefactors(t, alpha, v)[name] for v in y[keep]])
                adjusted = log_p - np.log(prefactor) + y[keep] ** 2 / t
                weights = counts[keep] / np.maximum(1.0 - counts[keep] / n, 1.0 / n)
                corrected[name] = wls_line(y[keep], adjusted, weights)[0]
            report.corrected_slope = corrected["interpolating"]
            report.extras["corrected_slopes"] = corrected
        report.extras["monotone"] = bool(np.all(np.diff(report.p_hat) <= 0))
        report.extras["prefactor_regime_boundary"] = t ** (1.0 - alpha)
        return report

    def estimate_left_tail(self, y_grid_negative: Sequence[float], n: int) -> TailReport:
        """Deficiency 1 - P(max > threshold(y)) for y < 0 against e^(2 sqrt(1+theta) y) / (1 - y)"""
        y = np.asarray(y_grid_negative, dtype=np.float64)
        if y.size == 0 or np.any(y >= 0):
            raise DomainError("left-tail y values must all be negative")
        if n < MIN_TAIL_SAMPLES:
            raise DomainError(f"tail estimates need n >= {MIN_TAIL_SAMPLES}, got {n}")

        t, alpha = self.config.t, self.config.alpha
        thresholds = np.array([threshold_log_max(t, alpha, v) for v in y])
        maxima = self.scale_maxima(n)[:, -1]
        envelope = [predicted_left_tail(t, alpha, v) for v in y]
        report = self._tail_report("left", maxima, y, thresholds, envelope, n)

        misses = n - np.array(report.hits)
        deficiency = misses / n
        report.extras["deficiency"] = deficiency.tolist()
        report.extras["deficiency_over_envelope"] = [float(d / e) for d, e in zip(deficiency, envelope)]
        order = np.argsort(-y)
        report.extras["deficiency_decreasing"] = bool(np.all(np.diff(deficiency[order]) <= 0))
        report.predicted_slope = 2.0 * math.sqrt(1.0 + theta(t, alpha))
        fit, keep = self._fit(y, misses, n)
        report.dropped_y = [float(v) for v in y[~keep]]
        if fit is not None:
            report.fitted_slope, _, report.fitted_slope_stderr = fit
        return report

    def first_hitting_histogram(self, barrier: BarrierSpec, n: int, raise_by: float = 0.0) -> HittingReport:
        """Histogram over k of the first scale k+1 where max_h S_(k+1)(h) > M(k+1)"""
        if barrier.kind != BarrierKind.UPPER:
            raise ConfigError(f"first hitting needs an upper barrier, got {barrier.kind.value}")
        if barrier.t != self.config.t or barrier.alpha != self.config.alpha:
            raise ConfigError("barrier t/alpha do not match the run configuration")

        t = self.config.t
        levels = barrier_values(barrier)[1:] + raise_by
        crossed = self.scale_maxima(n) > levels
        ever = crossed.any(axis=1)
        first = np.argmax(crossed, axis=1)[ever]
        histogram = np.bincount(first, minlength=t)
        crossing_count = int(np.count_nonzero(ever))

        late_start = t - t ** self.config.alpha
        late_mass = int(histogram[np.arange(t) + 1 > late_start].sum())
        return HittingReport(
            histogram=histogram.tolist(),
            crossing_count=crossing_count,
            n=n,
            late_range_start=late_start,
            late_fraction=late_mass / crossing_count if crossing_count else None,
            partition_exact=int(histogram.sum()) == crossing_count,
            seed=self.config.seed,
            config=self._config_dump(),
        )

    def small_interval_sampler(self, j: int) -> FieldSampler:
        """Sampler for S_j on 17 points spanning [-e^-j, e^-j]"""
        if not 1 <= j <= self.config.t:
            raise DomainError(f"j={j} outside 1..{self.config.t}")
        spacing = math.exp(-j) / SMALL_INTERVAL_HALF_POINTS
        n_sub = 2 * SMALL_INTERVAL_HALF_POINTS + 1
        covariances = [toeplitz_on_lags(self.bands, m, m, spacing, n_sub) for m in range(1, j + 1)]
        sub_config = ModelConfig(t=j, alpha=self.config.alpha, mode=self.config.mode, seed=self.config.seed,
                                 n_samples=self.config.n_samples, exact_mode_cap=self.config.exact_mode_cap)
        points = np.arange(-SMALL_INTERVAL_HALF_POINTS, SMALL_INTERVAL_HALF_POINTS + 1) * spacing
        return FieldSampler(sub_config, covariances=covariances, points=points,
                            batch_size=self.sampler.batch_size, threads=self.sampler.threads)

    def small_interval_max_tail(self, j: int, y_grid: Sequence[float], n: int) -> TailReport:
        """P(max over |h| <= e^-j of S_j(h) > y) against e^(-y^2/j) / sqrt(j)"""
        y = np.asarray(y_grid, dtype=np.float64)
        if y.size == 0:
            raise DomainError("y_grid must be nonempty")
        sampler = self.small_interval_sampler(j)
        maxima = np.concatenate(sampler.map_batches(
            lambda inc, start: inc.sum(axis=1).max(axis=1), n, desc="small interval"))

        report = self._tail_report("small_interval", maxima, y, y,
                                   [math.exp(-v * v / j) / math.sqrt(j) for v in y], n)
        report.predicted_slope = -1.0 / j
        variance = math.fsum(self.band_variances[:j])
        report.extras["j"] = j
        report.extras["single_point_tail"] = [float(norm.sf(v / math.sqrt(variance))) for v in y]
        counts = np.array(report.hits)
        fit, keep = self._fit(y ** 2, counts, n)
        report.dropped_y = [float(v) for v in y[~keep]]
        if fit is not None:
            # slope of log p_hat against y^2
            report.fitted_slope, _, report.fitted_slope_stderr = fit
            # a variance-j/2 Gaussian tail fitted on the same points and weights; its slope
            # only reaches -1/j as y grows, at y <= 2 it sits near -1.5/j
            reference = norm.sf(y[keep] / math.sqrt(j / 2.0))
            reference_slope, _, _ = wls_line(y[keep] ** 2, np.log(reference), _tail_weights(counts[keep], n))
            report.extras["gaussian_reference_slope"] = reference_slope
            report.extras["slope_over_reference"] = report.fitted_slope / reference_slope
        return report

    def _window_barrier(self, y: float, barrier: Optional[BarrierSpec]) -> Tuple[np.ndarray, float]:
        t, alpha = self.config.t, self.config.alpha
        if barrier is None:
            barrier = make_barrier(BarrierKind.LOWER, t, alpha, y if y >= 0 else 0.0)
        if barrier.kind != BarrierKind.LOWER:
            raise ConfigError(f"exceedance counts need a lower barrier, got {barrier.kind.value}")
        return barrier_values(barrier)[1:], slope_mu(t, alpha) * t + y

    def window_hits(self, partials: np.ndarray, levels: np.ndarray, low: float, delta: float) -> np.ndarray:
        """J(h) per (sample, point): S_t in [low, low + delta] and S_k < M(k) for k = 1..t"""
        field = partials[:, -1, :]
        under = np.all(partials < levels[None, :, None], axis=1)
        return under & (field >= low) & (field <= low + delta)

    def count_exceedances(self, delta: float, y: float, n: int, barrier: Optional[BarrierSpec] = None,
                          window_shift: float = 0.0) -> CountReport:
        """Counts Z_delta (y >= 0) or W_delta (y < 0) of grid points in the window under the barrier"""
        if delta <= 0:
            raise DomainError(f"delta must be positive, got {delta}")
        levels, low = self._window_barrier(y, barrier)
        low += window_shift

        counts = np.concatenate(self.sampler.map_batches(
            lambda inc, start: self.window_hits(_partials(inc), levels, low, delta).sum(axis=1), n,
            desc="counts"))
        z = counts.astype(np.float64)
        mean_z = float(z.mean())
        mean_z2 = float((z * z).mean())
        pz_lower = mean_z ** 2 / mean_z2 if mean_z2 > 0 else 0.0
        p_ge_1 = float(np.count_nonzero(counts >= 1)) / n

        stderr_pz = 0.0
        if mean_z2 > 0:
            ci = bootstrap_ci(z, seed=self.config.seed, tag="paley-zygmund",
                              statistic=lambda rows: _pz_statistic(rows))
            stderr_pz = ci.stderr or 0.0
        stderr_p = binomial_stderr(int(np.count_nonzero(counts >= 1)), n)
        slack = 3.0 * math.sqrt(stderr_pz ** 2 + stderr_p ** 2)

        report = CountReport(
            delta=delta,
            y=y,
            z_values=counts.astype(int).tolist(),
            w_values=counts.astype(int).tolist() if y < 0 else None,
            mean_z=mean_z,
            mean_z2=mean_z2,
            pz_lower=pz_lower,
            p_ge_1=p_ge_1,
            stderr_pz=stderr_pz,
            stderr_p=stderr_p,
            pz_consistent=pz_lower <= p_ge_1 + slack,
            second_moment_ratio=mean_z2 / mean_z ** 2 if mean_z > 0 else None,
            seed=self.config.seed,
            config=self._config_dump(),
        )
        if y < 0:
            report.left_envelope = predicted_left_tail(self.config.t, self.config.alpha, y)
        return report

    def pair_correlation(self, y: float, n: int, k_b_bins: Optional[Sequence[int]] = None,
                         delta: float = DEFAULT_DELTA) -> PairCorrelationReport:
        """P(J(h) and J(0)) binned by branching time k_b = log(1/|h|)"""
        levels, low = self._window_barrier(y, None)
        n_points = self.points.size
        size = 1 << int(math.ceil(math.log2(max(2 * n_points, 2))))

        offsets = np.arange(n_points)
        pair_totals = (n_points - offsets).astype(np.float64)
        gaps = offsets[1:] * self.config.spacing
        bin_of = np.floor(-np.log(gaps)).astype(int)
        if k_b_bins is None:
            k_b_bins = sorted(set(bin_of.tolist()))
        members_by_bin = [(int(k), offsets[1:][bin_of == k]) for k in k_b_bins]
        members_by_bin = [(k, m) for k, m in members_by_bin if m.size]

        def batch_pairs(inc: np.ndarray, start: int) -> np.ndarray:
            hits = self.window_hits(_partials(inc), levels, low, delta).astype(np.float64)
            spectrum = fft.rfft(hits, n=size, axis=1)
            lagged = np.rint(fft.irfft(spectrum * np.conj(spectrum), n=size, axis=1)[:, :n_points])
            # per sample: hits at offset 0, then pair counts per k_b bin
            return np.column_stack([lagged[:, 0]] + [lagged[:, m].sum(axis=1) for _, m in members_by_bin])

        per_sample = np.concatenate(self.sampler.map_batches(batch_pairs, n, desc="pairs"))
        marginal_hits = per_sample[:, 0]
        marginal = float(marginal_hits.sum() / (n * pair_totals[0]))

        lag_cov = None
        if self.covariances is not None:
            lag_cov = np.sum([cov.values for cov in self.covariances], axis=0)
        bins = []
        for column, (k, members) in enumerate(members_by_bin, start=1):
            bin_pairs = float(pair_totals[members].sum())
            joint_hits = int(per_sample[:, column].sum())
            joint = joint_hits / (n * bin_pairs)
            product = marginal * marginal
            factor = None
            if lag_cov is not None:
                rho = float(np.max(np.abs(lag_cov[members])))
                if rho < lag_cov[0]:
                    factor = math.sqrt((lag_cov[0] + rho) / (lag_cov[0] - rho))
            sparse = joint_hits < MIN_HITS
            ratio_ci = None
            if product > 0 and not sparse:
                ratio_ci = bootstrap_ci(per_sample[:, [0, column]], seed=self.config.seed, tag=f"pair-ratio-{k}",
                                        statistic=_pair_ratio_statistic(pair_totals[0], bin_pairs))
            bins.append(PairCorrelationBin(
                k_b=k,
                n_offsets=int(members.size),
                joint=joint,
                product=product,
                ratio=joint / product if product > 0 else None,
                ratio_lo=ratio_ci.lo if ratio_ci else None,
                ratio_hi=ratio_ci.hi if ratio_ci else None,
                joint_hits=joint_hits,
                sparse=sparse,
                comparison_factor=factor,
            ))
        sparse_bins = [b.k_b for b in bins if b.sparse]
        if sparse_bins:
            logger.warning(f"Sparse k_b bins (fewer than {MIN_HITS} joint hits): {sparse_bins}")

        dense = [b for b in bins if not b.sparse and b.ratio is not None]
        trend = None
        if len(dense) >= 3:
            trend = float(spearmanr([b.k_b for b in dense], [b.ratio for b in dense]).correlation)
        return PairCorrelationReport(
            y=y,
            delta=delta,
            marginal=marginal,
            zero_offset_joint=float(per_sample[:, 0].sum() / (n * pair_totals[0])),
            bins=bins,
            trend_correlation=trend,
            seed=self.config.seed,
            config=self._config_dump(),
        )

    def good_event_curve(self, A_list: Sequence[float], n: int) -> List[Tuple[float, float]]:
        """Empirical P(E_A^c) for each A"""
        maxima = self.scale_maxima(n)
        curve = []
        for A in A_list:
            failed = np.any(maxima > _good_event_barrier(self.config, A), axis=1)
            curve.append((float(A), float(np.count_nonzero(failed)) / n))
        return curve

    def high_point_curve(self, y_list: Sequence[float], A: float, n: int) -> Dict[str, object]:
        """Mean of S(mu t + y) across samples and its log-slope in y"""
        t, alpha = self.config.t, self.config.alpha
        levels = _good_event_barrier(self.config, A)
        centre = slope_mu(t, alpha) * t
        weights, span = trapezoid_weights(self.points)

        def batch_measure(inc: np.ndarray, start: int) -> np.ndarray:
            partials = _partials(inc)
            under = np.all(partials <= levels[None, :, None], axis=1)
            field = partials[:, -1, :]
            return np.stack([((field > centre + y) & under) @ weights / span for y in y_list], axis=1)

        measures = np.concatenate(self.sampler.map_batches(batch_measure, n, desc="high points"))
        means = measures.mean(axis=0)
        slope = None
        positive = means > 0
        if positive.sum() >= 3:
            slope = wls_line(np.asarray(y_list, dtype=np.float64)[positive], np.log(means[positive]),
                             np.ones(int(positive.sum())))[0]
        return {
            "y": [float(v) for v in y_list],
            "mean_measure": means.tolist(),
            "fitted_slope": slope,
            "predicted_slope": -2.0 * math.sqrt(1.0 + theta(t, alpha)),
        }

    def moment_markov_curve(self, beta: Optional[float], A_list: Sequence[float], n: int,
                            good_event_A: float = 1.0,
                            good_event_A_list: Sequence[float] = ()) -> MomentReport:
        """Tail of Z_norm = Z_beta / exp((beta^2/4) t - (alpha - 1/2) log t) at each A"""
        t, alpha = self.config.t, self.config.alpha
        beta = critical_beta(t, alpha) if beta is None else beta
        levels = _good_event_barrier(self.config, good_event_A)
        points = self.points

        def batch_moments(inc: np.ndarray, start: int) -> np.ndarray:
            partials = _partials(inc)
            field = partials[:, -1, :]
            log_z = log_moment_values(field, beta, points)
            good = np.all(partials.max(axis=2) <= levels[None, :], axis=1)
            return np.stack([log_z, field.max(axis=1), good.astype(np.float64)], axis=1)

        rows = np.concatenate(self.sampler.map_batches(batch_moments, n, desc="moments"))
        log_z, grid_max, good = rows[:, 0], rows[:, 1], rows[:, 2].astype(bool)

        lower_gap = math.log(self.config.spacing / (4.0 * self.config.half_width))
        tol = 1e-9 * np.maximum(1.0, np.abs(beta * grid_max))
        bounds_hold = bool(np.all(np.isfinite(log_z))
                           and np.all(log_z <= beta * grid_max + tol)
                           and np.all(log_z >= beta * grid_max + lower_gap - tol))

        log_norm = moment_normalization(t, alpha, beta)
        markov = []
        for A in A_list:
            markov.append((float(A), float(np.count_nonzero(log_z - log_norm > math.log(A))) / n))

        report = MomentReport(
            beta=beta,
            A=good_event_A,
            log_Z_values=log_z.tolist(),
            good_event_flags=good.tolist(),
            log_normalization=log_norm,
            quantiles={f"q{int(q * 100):02d}": float(np.quantile(log_z, q)) for q in (0.05, 0.5, 0.95)},
            markov_curve=markov,
            a_times_p=[A * p for A, p in markov],
            bounds_hold=bounds_hold,
            seed=self.config.seed,
            config=self._config_dump(),
        )
        if good_event_A_list:
            report.good_event_curve = self.good_event_curve(good_event_A_list, n)
            report.predicted_good_event = [predicted_right_tail(t, alpha, A) for A in good_event_A_list]
        return report

    def mgf_identity(self, beta: float, n: int) -> Dict[str, float]:
        """Mean of exp(beta S_t(0)) against exp(beta^2 V_t / 2)"""
        centre = self.points.size // 2
        values = np.concatenate(self.sampler.map_batches(
            lambda inc, start: inc[:, :, centre].sum(axis=1), n, desc="mgf"))
        ci = bootstrap_ci(np.exp(beta * values), seed=self.config.seed, tag="mgf")
        predicted = math.exp(beta * beta * self.total_variance / 2.0)
        return {
            "mean": ci.point,
            "lo": ci.lo,
            "hi": ci.hi,
            "stderr": ci.stderr or 0.0,
            "predicted": predicted,
            "z_score": (ci.point - predicted) / ci.stderr if ci.stderr else 0.0,
            "sample_mean": float(values.mean()),
            "sample_variance": float(values.var(ddof=1)),
            "variance": self.total_variance,
        }

    def recentered_max_summary(self, n: int) -> Dict[str, float]:
        """Quantiles of max_h S_t(h) - mu t"""
        t, alpha = self.config.t, self.config.alpha
        recentered = self.scale_maxima(n)[:, -1] - slope_mu(t, alpha) * t
        summary = {f"q{int(q * 100):02d}": float(np.quantile(recentered, q)) for q in (0.1, 0.5, 0.9)}
        summary.update(t=t, mean=float(recentered.mean()), std=float(recentered.std(ddof=1)),
                       approximate=self.approximate)
        return summary

    def good_event_ratios(self, A_list: Sequence[float], n: int) -> List[Dict[str, float]]:
        """Step ratios of P(E_A^c) against the predicted shape, with bootstrap intervals"""
        maxima = self.scale_maxima(n)
        t, alpha = self.config.t, self.config.alpha
        indicators = [np.any(maxima > _good_event_barrier(self.config, A), axis=1).astype(np.float64)
                      for A in A_list]
        steps = []
        for i in range(len(A_list) - 1):
            a, b = A_list[i], A_list[i + 1]
            predicted = predicted_right_tail(t, alpha, b) / predicted_right_tail(t, alpha, a)
            entry = {"A": float(a), "A_next": float(b), "predicted": predicted}
            if indicators[i].sum() > 0:
                ci = bootstrap_ratio(indicators[i + 1], indicators[i], seed=self.config.seed)
                entry.update(empirical=ci.point, lo=ci.lo, hi=ci.hi)
            steps.append(entry)
        return steps


def _pz_statistic(rows: np.ndarray) -> np.ndarray:
    first = rows.mean(axis=1)
    second = (rows * rows).mean(axis=1)
    return np.divide(first * first, second, out=np.zeros_like(first), where=second > 0)


def _tail_weights(counts: np.ndarray, n: int) -> np.ndarray:
    """Inverse variance of log p_hat for binomial counts"""
    p = counts / n
    return counts / np.maximum(1.0 - p, 1.0 / n)


def _pair_ratio_statistic(points: float, bin_pairs: float):
    """joint / marginal^2 on rows of (hits at offset 0, pair count in the bin)"""
    def statistic(rows: np.ndarray) -> np.ndarray:
        marginal = rows[..., 0].mean(axis=1) / points
        joint = rows[..., 1].mean(axis=1) / bin_pairs
        product = marginal * marginal
        return np.divide(joint, product, out=np.full_like(joint, np.nan), where=product > 0)
    return statistic


def compare_samplers(first: FieldSampler, second: FieldSampler, n: int, seed: int,
                     quantiles: Sequence[float] = (0.5, 0.9, 0.99)) -> Dict[str, object]:
    """Per-point variances and grid-max quantiles of two samplers on the same grid"""

    def batch_stats(inc: np.ndarray, start: int) -> np.ndarray:
        return inc.sum(axis=1)

    results = {}
    for name, sampler in (("first", first), ("second", second)):
        fields = np.concatenate(sampler.map_batches(batch_stats, n, desc=f"compare {name}"))
        maxima = fields.max(axis=1)
        results[name] = {
            "variance": fields.var(axis=0, ddof=1),
            "maxima": maxima,
        }

    var_a, var_b = results["first"]["variance"], results["second"]["variance"]
    summary = {
        "mean_variance_first": float(var_a.mean()),
        "mean_variance_second": float(var_b.mean()),
        "mean_variance_relative_gap": float(abs(var_a.mean() - var_b.mean()) / var_b.mean()),
        "max_pointwise_relative_gap": float(np.max(np.abs(var_a - var_b) / var_b)),
        "quantiles": [],
    }
    overlap = True
    for q in quantiles:
        entry = {"q": q}
        for name in ("first", "second"):
            ci = bootstrap_ci(results[name]["maxima"], seed=seed, tag=f"max-quantile-{name}",
                              statistic=lambda rows, q=q: np.quantile(rows, q, axis=1))
            entry[name] = (ci.point, ci.lo, ci.hi)
        a_lo, a_hi = entry["first"][1], entry["first"][2]
        b_lo, b_hi = entry["second"][1], entry["second"][2]
        entry["overlap"] = a_lo <= b_hi and b_lo <= a_hi
        overlap &= entry["overlap"]
        summary["quantiles"].append(entry)
    summary["quantiles_overlap"] = overlap
    return summary
