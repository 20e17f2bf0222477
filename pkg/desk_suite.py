"""
Pinned acceptance checks behind ``cli.py report --suite desk|smoke``.

The desk suite runs the full-size checks (exact t=3, N up to 2e6); the smoke
suite runs the same pipeline at t=2 with small N and keeps only checks that
do not depend on sample size.
"""

import logging
import math
import time
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import norm

from ballot_numerics import (
    LinearSweepPoint,
    ballot_dp,
    ballot_dp_richardson,
    ballot_mc,
    check_prop_linear,
    gaussian_comparison_check,
    linear_barrier_query,
    log_barrier_query,
)
from covariance_engine import exact_lag_values, surrogate_lag_values
from euler_model_system import EulerModelSystem
from exceptions import ConfigError, EulerModelError
from experiments import MIN_HITS, compare_samplers, moment_by_parts
from models import (
    BallotQuery,
    BarrierKind,
    ComparisonQuery,
    ModelConfig,
    Rectangle,
    SamplerKind,
    SamplingMode,
    SuiteCheck,
    SuiteResult,
)
from prediction import make_barrier, predicted_right_tail
from prime_bands import mertens_curve

logger = logging.getLogger(__name__)

SIGMA1_SQUARED = 0.4220113
CLOSED_FORM_BALLOT = 0.5204999
ORTHANT_LHS = 0.3333333
ORTHANT_RHS = 0.4330127
RIGHT_TAIL_Y = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
LEFT_TAIL_Y = [-2.0, -3.0, -4.0]
SMALL_INTERVAL_Y = [0.5, 1.0, 1.5, 2.0]
GOOD_EVENT_A = [1.0, 2.0, 3.0]
MARKOV_A = [2.0, 4.0, 8.0]
COMPARISON_RHOS = [-0.5, 0.0, 0.3, 0.5, 0.9]
COMPARISON_RECTANGLES = [
    Rectangle(x_lo=-math.inf, x_hi=0.0, y_lo=-math.inf, y_hi=0.0),
    Rectangle(x_lo=-1.0, x_hi=1.0, y_lo=-1.0, y_hi=1.0),
    Rectangle(x_lo=0.0, x_hi=1.0, y_lo=-2.0, y_hi=0.5),
    Rectangle(x_lo=0.5, x_hi=2.0, y_lo=0.5, y_hi=2.0),
    Rectangle(x_lo=2.0, x_hi=3.0, y_lo=2.0, y_hi=3.0),
]
# band 2 is the shortest exact band; its variance sits about 0.04 below 1/2
BAND_TWO_TOLERANCE = 0.08


class SuiteParams(BaseModel):
    """Sizes and tolerances of one suite; None disables a size-dependent check"""
    name: str
    exact_t: int
    surrogate_t: int
    alpha: float = 0.5
    moments_alpha: float = 0.75
    seed: int = 20240917
    mertens_x: List[float]
    n_sampler: int
    n_mgf: int
    n_tail: int
    n_good_event: int
    n_surrogate_tail: int
    n_left: int
    n_counts: int
    n_moments: int
    n_small: int
    n_pairs: int
    n_ballot_mc: int
    n_by_parts: int = 20
    cov_tolerance: float = 0.03
    slope_tolerance: Optional[float] = None
    surrogate_slope_tolerance: Optional[float] = None
    small_slope_tolerance: Optional[float] = None
    spread_limit: float = 4.0
    # the farthest bin still carries band-1 covariance of order e^-1 / |h|
    pair_far_tolerance: float = 0.25
    good_event_factor: Optional[float] = None
    markov_factor: Optional[float] = None
    check_late_majority: bool = True
    log_ballot: bool = Field(default=True, description="Run the t=64 logarithmic-barrier cross-check")


DESK = SuiteParams(
    name="desk",
    exact_t=3,
    # largest surrogate t whose grid fits the dense factorization at alpha = 0.5:
    # t=5 has 2 e^(5 / sqrt 5) e^5 ~ 2.8e3 points; t=6 ~ 9.3e3 and t=8 ~ 1.0e5 exceed max_dense_grid
    surrogate_t=5,
    mertens_x=[1e6, 1e8],
    n_sampler=2000,
    n_mgf=100_000,
    n_tail=200_000,
    # P(E_A^c) falls off fast in A; A=2 needs about 10^6 samples for 20 crossings
    n_good_event=2_000_000,
    n_surrogate_tail=200_000,
    n_left=10_000,
    n_counts=100_000,
    n_moments=100_000,
    n_small=100_000,
    n_pairs=10_000,
    n_ballot_mc=1_000_000,
    slope_tolerance=0.35,
    surrogate_slope_tolerance=0.25,
    small_slope_tolerance=0.25,
    good_event_factor=2.0,
    markov_factor=3.0,
)

SMOKE = SuiteParams(
    name="smoke",
    exact_t=2,
    surrogate_t=3,
    mertens_x=[1e4, 1e6],
    n_sampler=2000,
    n_mgf=20_000,
    n_tail=20_000,
    n_good_event=20_000,
    n_surrogate_tail=10_000,
    n_left=10_000,
    n_counts=10_000,
    n_moments=5_000,
    n_small=10_000,
    n_pairs=10_000,
    n_ballot_mc=100_000,
    n_by_parts=5,
    log_ballot=False,
)

SUITES = {"desk": DESK, "smoke": SMOKE}


def _check(name: str, passed: bool, value: Optional[float] = None, expected: str = "", detail: str = "") -> SuiteCheck:
    return SuiteCheck(name=name, passed=bool(passed), value=None if value is None else float(value),
                      expected=expected, detail=detail)


class DeskSuite:
    """Runs the acceptance sections against one system"""

    def __init__(self, params: SuiteParams, system: EulerModelSystem, threads: Optional[int] = None):
        self.params = params
        self.system = system
        self.threads = threads
        self._runners = {}

    def config(self, t: int, alpha: float, mode: SamplingMode = SamplingMode.EXACT_PRIME) -> ModelConfig:
        return ModelConfig(t=t, alpha=alpha, mode=mode, seed=self.params.seed,
                           exact_mode_cap=max(3, self.params.exact_t))

    def runner(self, t: int, alpha: float, mode: SamplingMode = SamplingMode.EXACT_PRIME):
        key = (t, alpha, mode)
        if key not in self._runners:
            self._runners[key] = self.system.get_runner(self.config(t, alpha, mode), SamplerKind.TOEPLITZ,
                                                        self.threads)
        return self._runners[key]

    # ------------------------------------------------------------ sections

    def bands(self) -> List[SuiteCheck]:
        p = self.params
        table = self.system.get_bands(self.config(p.exact_t, p.alpha))
        sigma1 = table.band(1).variance
        deviations = {m: abs(table.band(m).variance - 0.5) for m in range(2, p.exact_t + 1)}
        residuals = mertens_curve(p.mertens_x)
        drift = abs(residuals[-1] - residuals[0])
        return [
            _check("band_1_variance", abs(sigma1 - SIGMA1_SQUARED) <= 1e-6, sigma1,
                   f"|sigma_1^2 - {SIGMA1_SQUARED}| <= 1e-6", f"sigma_1^2 = {sigma1:.9f}"),
            _check("band_variances_near_half", max(deviations.values()) <= 0.08, max(deviations.values()),
                   "|sigma_m^2 - 1/2| <= 0.08 for m >= 2",
                   ", ".join(f"m={m}: {d:.4f}" for m, d in deviations.items())),
            _check("mertens_stable", drift < 0.01, drift, "|res(x_max) - res(x_min)| < 0.01",
                   ", ".join(f"{x:g}: {r:.6f}" for x, r in zip(p.mertens_x, residuals))),
        ]

    def covariance(self) -> List[SuiteCheck]:
        p = self.params
        config = self.config(p.exact_t, p.alpha)
        bands = self.system.get_bands(config)
        covariances = self.system.get_covariances(config)
        lags = covariances[0].lags

        kinds = [cov.factor_kind for cov in covariances]
        full = exact_lag_values(bands, 1, p.exact_t, lags)
        mirrored = exact_lag_values(bands, 1, p.exact_t, -lags)
        additivity = float(np.max(np.abs(np.sum([cov.values for cov in covariances], axis=0) - full)))
        evenness = float(np.max(np.abs(full - mirrored)))

        gaps = {}
        passed = True
        for m in range(2, p.exact_t + 1):
            gap = float(np.max(np.abs(surrogate_lag_values(m, m, lags) - covariances[m - 1].values)))
            tolerance = BAND_TWO_TOLERANCE if m == 2 else p.cov_tolerance
            gaps[m] = gap
            passed &= gap <= tolerance
        return [
            _check("toeplitz_factorized", all(cov.factor is not None for cov in covariances), None,
                   "every band factorized with at most one jitter retry", f"factors: {kinds}"),
            _check("covariance_even", evenness <= 1e-10, evenness, "<= 1e-10"),
            _check("covariance_band_additive", additivity <= 1e-10, additivity, "<= 1e-10"),
            _check("surrogate_matches_exact", passed, max(gaps.values()),
                   f"<= {p.cov_tolerance} at every lag (band 2: <= {BAND_TWO_TOLERANCE})",
                   ", ".join(f"m={m}: {g:.4f}" for m, g in gaps.items())),
        ]

    def samplers(self) -> List[SuiteCheck]:
        p = self.params
        config = self.config(2, p.alpha)
        direct = self.system.get_sampler(config, SamplerKind.DIRECT, self.threads)
        toeplitz = self.system.get_sampler(config, SamplerKind.TOEPLITZ, self.threads)
        summary = compare_samplers(direct, toeplitz, p.n_sampler, p.seed)
        # at n=2000 one sample variance has a 3.2% standard error (sqrt(2/n)); over the
        # 61 points of the t=2 grid a 5% per-point bound would fail by noise alone, the
        # grid average pools them
        gap = summary["mean_variance_relative_gap"]
        return [
            _check("sampler_variances_agree", gap <= 0.05, gap, "grid-averaged variance gap <= 5%",
                   f"direct {summary['mean_variance_first']:.4f}, toeplitz {summary['mean_variance_second']:.4f}"),
            _check("sampler_max_quantiles_overlap", summary["quantiles_overlap"], None,
                   "bootstrap 95% bands of the 50/90/99% max quantiles overlap"),
        ]

    def mgf(self) -> List[SuiteCheck]:
        p = self.params
        result = self.runner(p.exact_t, p.alpha).mgf_identity(1.0, p.n_mgf)
        return [_check("mgf_identity", abs(result["z_score"]) <= 3.0, result["z_score"],
                       "|mean e^S - e^(V/2)| <= 3 bootstrap stderr",
                       f"mean {result['mean']:.5f}, predicted {result['predicted']:.5f}")]

    def _slope_check(self, name: str, report, tolerance: Optional[float]) -> SuiteCheck:
        monotone = report.extras.get("monotone", False)
        if tolerance is None:
            return _check(name, monotone, report.fitted_slope, "p_hat nonincreasing in y",
                          f"fitted {report.fitted_slope}, predicted {report.predicted_slope:.4f}")
        if report.fitted_slope is None:
            return _check(name, False, None, f"within {tolerance} of predicted slope",
                          f"too few points with hits; dropped {report.dropped_y}")
        gap = abs(report.fitted_slope - report.predicted_slope)
        return _check(name, monotone and gap <= tolerance, report.fitted_slope,
                      f"monotone and within {tolerance} of {report.predicted_slope:.7f}",
                      f"fitted {report.fitted_slope:.4f} ± {report.fitted_slope_stderr:.4f}")

    def right_tail(self) -> List[SuiteCheck]:
        p = self.params
        exact = self.runner(p.exact_t, p.alpha).estimate_right_tail(RIGHT_TAIL_Y, p.n_tail)
        surrogate = self.runner(p.surrogate_t, p.alpha, SamplingMode.SURROGATE).estimate_right_tail(
            RIGHT_TAIL_Y, p.n_surrogate_tail)
        return [
            self._slope_check("right_tail_slope_exact", exact, p.slope_tolerance),
            self._slope_check("right_tail_slope_surrogate", surrogate, p.surrogate_slope_tolerance),
        ]

    def left_tail(self) -> List[SuiteCheck]:
        p = self.params
        report = self.runner(p.exact_t, p.alpha).estimate_left_tail(LEFT_TAIL_Y, p.n_left)
        p_far = report.p_hat[LEFT_TAIL_Y.index(-4.0)]
        return [
            _check("left_tail_mass", p_far >= 0.95, p_far, "p_hat(y=-4) >= 0.95"),
            _check("left_tail_deficiency_decreasing", report.extras["deficiency_decreasing"], None,
                   "1 - p_hat decreasing as y decreases",
                   f"deficiency {report.extras['deficiency']}"),
        ]

    def ballot(self) -> List[SuiteCheck]:
        p = self.params
        closed = BallotQuery(j=1, sigma2=np.array([0.5]), barrier_values=np.array([1.0]), x=0.0, delta=0.5)
        dp = ballot_dp(closed)
        exact = float(norm.cdf(0.5 / math.sqrt(0.5)) - norm.cdf(-0.5 / math.sqrt(0.5)))
        mc, mc_err = ballot_mc(closed, p.n_ballot_mc, p.seed)
        checks = [
            _check("ballot_closed_form_dp", abs(dp - CLOSED_FORM_BALLOT) <= 1e-6, dp,
                   f"within 1e-6 of {CLOSED_FORM_BALLOT}", f"normal CDF value {exact:.9f}"),
            _check("ballot_closed_form_mc", abs(mc - exact) <= 3.0 * mc_err, mc, "within 3 stderr",
                   f"stderr {mc_err:.2e}"),
        ]

        linear = linear_barrier_query(LinearSweepPoint(j=16, a=0.2, b0=2.0, x=1.0, delta=1.0))
        dp16 = ballot_dp(linear)
        mc16, err16 = ballot_mc(linear, p.n_ballot_mc, p.seed + 1)
        checks.append(_check("ballot_linear_dp_vs_mc", abs(dp16 - mc16) <= 3.0 * err16, dp16,
                             "DP within 3 MC stderr", f"mc {mc16:.6f} ± {err16:.2e}"))

        sweep = [LinearSweepPoint(j=j, a=0.2, b0=2.0, x=(0.2 * j + 2.0) / 2.0) for j in (8, 16, 32, 64)]
        report = check_prop_linear(sweep, "upper")
        checks.append(_check("ballot_upper_ratio_spread", report.spread <= p.spread_limit, report.spread,
                             f"max/min ratio <= {p.spread_limit}",
                             f"ratios [{report.min_ratio:.4f}, {report.max_ratio:.4f}]"))
        richardson = [ballot_dp_richardson(linear_barrier_query(point)) for point in sweep]
        worst = max(abs(r.difference) for r in richardson)
        checks.append(_check("ballot_richardson", all(r.converged for r in richardson), worst,
                             "|dp(h/2) - dp(h)| < 1e-4 on the sweep"))

        if p.log_ballot:
            log_query = log_barrier_query(64, 32, 2.0, 0.0)
            dp_log = ballot_dp(log_query)
            mc_log, err_log = ballot_mc(log_query, p.n_ballot_mc, p.seed + 2)
            checks.append(_check("ballot_log_dp_vs_mc", abs(dp_log - mc_log) <= 3.0 * err_log, dp_log,
                                 "t=64, k=32, y=2, x=0: DP within 3 MC stderr", f"mc {mc_log:.6f} ± {err_log:.2e}"))

        results = [gaussian_comparison_check(ComparisonQuery(s2=1.0, rho=rho, rectangle=rect))
                   for rho in COMPARISON_RHOS for rect in COMPARISON_RECTANGLES]
        orthant = gaussian_comparison_check(ComparisonQuery(s2=1.0, rho=0.5, rectangle=COMPARISON_RECTANGLES[0]))
        checks.append(_check("comparison_inequality", all(r.holds for r in results), None,
                             "lhs <= factor * rhs on every rectangle", f"{len(results)} combinations"))
        checks.append(_check("comparison_orthant",
                             abs(orthant.lhs - ORTHANT_LHS) <= 1e-7 and abs(orthant.rhs - ORTHANT_RHS) <= 1e-7
                             and orthant.holds,
                             orthant.lhs, f"lhs {ORTHANT_LHS} <= rhs {ORTHANT_RHS}", f"rhs {orthant.rhs:.7f}"))
        return checks

    def hitting(self) -> List[SuiteCheck]:
        p = self.params
        runner = self.runner(p.exact_t, p.alpha)
        report = runner.first_hitting_histogram(make_barrier(BarrierKind.UPPER, p.exact_t, p.alpha, 0.0), p.n_tail)
        checks = [_check("hitting_partition_exact", report.partition_exact, report.crossing_count,
                         "histogram total equals crossing count", f"histogram {report.histogram}")]
        if p.check_late_majority:
            fraction = report.late_fraction if report.late_fraction is not None else 0.0
            checks.append(_check("hitting_late_majority", fraction > 0.5, fraction,
                                 f"scales above t - t^alpha = {report.late_range_start:.3f} carry > 1/2"))
        return checks

    def counts(self) -> List[SuiteCheck]:
        p = self.params
        runner = self.runner(p.exact_t, p.alpha)
        checks = []
        for y in (0.0, 1.0):
            report = runner.count_exceedances(1.0, y, p.n_counts)
            checks.append(_check(f"paley_zygmund_y{y:g}", report.pz_consistent, report.pz_lower,
                                 "pz_lower <= p_ge_1 + 3 combined stderr",
                                 f"p_ge_1 {report.p_ge_1:.5f}, stderrs {report.stderr_pz:.2e}/{report.stderr_p:.2e}"))
        return checks

    def small_interval(self) -> List[SuiteCheck]:
        p = self.params
        report = self.runner(p.exact_t, p.alpha).small_interval_max_tail(p.exact_t, SMALL_INTERVAL_Y, p.n_small)
        single = report.extras["single_point_tail"]
        slack = [3.0 * math.sqrt(max(s * (1.0 - s), 1e-12) / report.n) for s in single]
        dominated = all(ph >= s - e for ph, s, e in zip(report.p_hat, single, slack))
        checks = [_check("small_interval_dominates_point", dominated, None,
                         "p_hat >= single-point Gaussian tail - 3 stderr")]
        if p.small_slope_tolerance is not None:
            ratio = report.extras.get("slope_over_reference")
            reference = report.extras.get("gaussian_reference_slope")
            within = ratio is not None and abs(ratio - 1.0) <= p.small_slope_tolerance
            checks.append(_check("small_interval_slope", within, report.fitted_slope,
                                 f"slope vs y^2 within {p.small_slope_tolerance:.0%} of the variance-j/2 Gaussian",
                                 f"reference {reference}, asymptotic {report.predicted_slope:.4f}"))
        return checks

    def pairs(self) -> List[SuiteCheck]:
        p = self.params
        report = self.runner(p.exact_t, p.alpha).pair_correlation(0.0, p.n_pairs)
        checks = [_check("pair_zero_offset_is_marginal", math.isclose(report.marginal, report.zero_offset_joint),
                         report.marginal, "joint at offset 0 equals the marginal")]

        far = min(report.bins, key=lambda b: b.k_b) if report.bins else None
        if far is None or far.ratio_lo is None:
            checks.append(_check("pair_far_ratio_near_one", False, None, "farthest k_b bin is dense",
                                 f"farthest bin {far.k_b if far else None} has too few joint hits"))
        else:
            tol = p.pair_far_tolerance
            near_one = far.ratio_lo <= 1.0 + tol and far.ratio_hi >= 1.0 / (1.0 + tol)
            checks.append(_check("pair_far_ratio_near_one", near_one, far.ratio,
                                 f"ratio CI at k_b={far.k_b} reaches [1/{1 + tol:g}, {1 + tol:g}]",
                                 f"CI [{far.ratio_lo:.3f}, {far.ratio_hi:.3f}]"))

        dense = [b for b in report.bins if not b.sparse and b.ratio is not None]
        rising = (len(dense) >= 3 and report.trend_correlation is not None and report.trend_correlation > 0
                  and dense[-1].ratio > dense[0].ratio)
        checks.append(_check("pair_ratio_rises_with_k_b", rising, report.trend_correlation,
                             "Spearman(k_b, ratio) > 0 and nearest bin above farthest",
                             f"ratios {[(b.k_b, round(b.ratio, 3)) for b in dense]}"))
        return checks

    def moments(self) -> List[SuiteCheck]:
        p = self.params
        tail_runner = self.runner(p.exact_t, p.alpha)
        curve = tail_runner.good_event_curve(GOOD_EVENT_A, p.n_good_event)
        counts = [int(round(prob * p.n_good_event)) for _, prob in curve]
        factors, flagged = [], []
        for i in range(len(curve) - 1):
            a, b = GOOD_EVENT_A[i], GOOD_EVENT_A[i + 1]
            if min(counts[i], counts[i + 1]) < MIN_HITS:
                flagged.append(f"A={a:g}->{b:g}")
                continue
            predicted = predicted_right_tail(p.exact_t, p.alpha, b) / predicted_right_tail(p.exact_t, p.alpha, a)
            factors.append(counts[i + 1] / counts[i] / predicted)
        if p.good_event_factor is None or not factors:
            good_ok = bool(factors) or p.good_event_factor is None
        else:
            good_ok = all(1.0 / p.good_event_factor <= f <= p.good_event_factor for f in factors)
        checks = [_check("good_event_shape", good_ok, max(factors, default=None),
                         f"empirical/predicted step ratio within a factor {p.good_event_factor}",
                         f"counts {counts}, factors {[round(f, 3) for f in factors]}, "
                         f"fewer than {MIN_HITS} hits: {flagged or 'none'}")]

        runner = self.runner(p.exact_t, p.moments_alpha)
        report = runner.moment_markov_curve(None, MARKOV_A, p.n_moments)
        products = report.a_times_p
        checks.append(_check("moment_bounds", report.bounds_hold, None, "trapezoid envelope holds per sample"))
        if p.markov_factor is not None:
            stable = min(products) > 0 and max(products) / min(products) <= p.markov_factor
            checks.append(_check("markov_product_stable", stable,
                                 max(products) / min(products) if min(products) > 0 else None,
                                 f"A * P(Z_norm > A) within a factor {p.markov_factor}",
                                 f"A*P {[round(v, 5) for v in products]}"))
        errors = [moment_by_parts(sample, report.beta)["relative_error"]
                  for sample in runner.sampler.iter_samples(p.n_by_parts)]
        checks.append(_check("moment_by_parts", max(errors) < 0.01, max(errors), "relative error < 1% per sample"))
        return checks

    def sections(self) -> List[Callable[[], List[SuiteCheck]]]:
        return [self.bands, self.covariance, self.samplers, self.mgf, self.right_tail, self.left_tail,
                self.ballot, self.hitting, self.counts, self.small_interval, self.pairs, self.moments]

    def run(self) -> SuiteResult:
        result = SuiteResult(suite=self.params.name, approximate=True)
        for section in self.sections():
            name = section.__name__
            start = time.perf_counter()
            try:
                checks = section()
            except EulerModelError as e:
                logger.error(f"Section {name} failed: {e}")
                checks = [_check(f"{name}_completed", False, detail=f"{type(e).__name__}: {e}")]
            elapsed = time.perf_counter() - start
            for check in checks:
                check.seconds = elapsed / len(checks)
                logger.info(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
            result.checks.extend(checks)
        return result


def run_suite(name: str, system: EulerModelSystem, threads: Optional[int] = None) -> SuiteResult:
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}")
    return DeskSuite(SUITES[name], system, threads).run()
