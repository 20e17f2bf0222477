from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from typing import List, Optional, Dict, Any, Tuple
from datetime import datetime
from enum import Enum
import hashlib
import math

import numpy as np

from config import settings

class SamplingMode(str, Enum):
    EXACT_PRIME = "exact-prime"
    SURROGATE = "surrogate"

class SamplerKind(str, Enum):
    TOEPLITZ = "toeplitz"
    DIRECT = "direct"

class CovarianceRegime(str, Enum):
    NEAR = "near"
    FAR = "far"
    MIDDLE = "middle"

class BarrierKind(str, Enum):
    UPPER = "upper"
    LOWER = "lower"
    GOOD_EVENT = "good_event"

class CIMethod(str, Enum):
    WILSON = "wilson"
    BOOTSTRAP = "bootstrap"

class ModelConfig(BaseModel):
    """Scale parameters of one simulation run"""
    model_config = ConfigDict(frozen=True)

    t: int = Field(ge=1, description="Number of scales, t = log log T")
    alpha: float = Field(gt=0.0, lt=1.0, description="Interval exponent, theta = t^-alpha")
    mode: SamplingMode = Field(default=SamplingMode.EXACT_PRIME, description="Prime sums or integral surrogate")
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64, description="Master seed")
    n_samples: int = Field(default_factory=lambda: settings.default_n_samples, ge=1, description="Monte Carlo sample count")
    refinement: int = Field(default=1, ge=1, description="Grid refinement factor dividing e^-t")
    exact_mode_cap: int = Field(default_factory=lambda: settings.exact_mode_cap, ge=1, description="Largest t for exact-prime mode")

    @model_validator(mode="after")
    def _check_exact_cap(self) -> "ModelConfig":
        if self.mode == SamplingMode.EXACT_PRIME and self.t > self.exact_mode_cap:
            raise ValueError(
                f"t={self.t} exceeds exact_mode_cap={self.exact_mode_cap}; use mode=surrogate"
            )
        return self

    @computed_field
    @property
    def theta(self) -> float:
        return self.t ** (-self.alpha)

    @computed_field
    @property
    def half_width(self) -> float:
        return math.exp(self.t * self.theta)

    @computed_field
    @property
    def spacing(self) -> float:
        return math.exp(-self.t) / self.refinement

    @property
    def j_max(self) -> int:
        j = math.floor(self.half_width / self.spacing)
        # floor of a rounded quotient can be off by one at the boundary
        while (j + 1) * self.spacing <= self.half_width:
            j += 1
        while j > 0 and j * self.spacing > self.half_width:
            j -= 1
        return j

    @computed_field
    @property
    def n_points(self) -> int:
        return 2 * self.j_max + 1

class Band(BaseModel):
    """Primes with e^(m-1) < log p <= e^m, stored as (log p, p^-1/2) pairs"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int = Field(ge=1, description="Scale index m")
    log_freqs: np.ndarray = Field(description="log p, ascending")
    weights: np.ndarray = Field(description="p^-1/2, aligned with log_freqs")
    variance: float = Field(ge=0.0, description="Half the sum of 1/p over the band")

    @property
    def prime_count(self) -> int:
        return int(self.log_freqs.size)

class BandTable(BaseModel):
    """All bands 1..t of one sieve (or of the surrogate)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: int = Field(ge=1)
    mode: SamplingMode
    sieve_limit: int = Field(default=0, description="Largest integer sieved, 0 for surrogate tables")
    approximate: bool = Field(default=False, description="True when bands come from the surrogate")
    bands: List[Band] = Field(default_factory=list)

    def band(self, m: int) -> Band:
        return self.bands[m - 1]

    def variances(self) -> np.ndarray:
        return np.array([b.variance for b in self.bands])

    def total_variance(self, k: int = 1, l: Optional[int] = None) -> float:
        l = self.t if l is None else l
        return math.fsum(b.variance for b in self.bands[k - 1:l])

    @property
    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(f"{self.t}:{self.mode.value}:{self.sieve_limit}".encode())
        for b in self.bands:
            digest.update(np.ascontiguousarray(b.log_freqs, dtype=np.float64).tobytes())
            digest.update(np.ascontiguousarray(b.weights, dtype=np.float64).tobytes())
        return digest.hexdigest()

class AsymptoticCovariance(BaseModel):
    """Regime classification of a lag and the leading value or envelope"""
    regime: CovarianceRegime
    value: Optional[float] = Field(default=None, description="Leading value (near), envelope (far), None (middle)")

class ToeplitzCovariance(BaseModel):
    """First row of a stationary covariance on the grid plus its sampling factor"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int = Field(ge=1)
    l: int = Field(ge=1)
    spacing: float = Field(gt=0.0)
    lags: np.ndarray = Field(description="0, s, 2s, ... (n values)")
    values: np.ndarray = Field(description="Covariance at each lag")
    factor: Optional[np.ndarray] = Field(default=None, description="F with F F^T equal to the Toeplitz matrix")
    factor_kind: str = Field(default="none", description="cholesky, cholesky+jitter or eigen")
    jitter: float = Field(default=0.0, description="Diagonal jitter added before factorizing")
    min_eigenvalue: Optional[float] = Field(default=None, description="Most negative eigenvalue seen by the eigen path")
    approximate: bool = Field(default=False)

    @property
    def n(self) -> int:
        return int(self.values.size)

class FieldSample(BaseModel):
    """One realization: per-band increments Y_m(h) on the grid"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    increments: np.ndarray = Field(description="Shape (t, n); row m-1 holds Y_m")
    points: np.ndarray = Field(description="Grid points h")
    sample_id: int
    seed_path: Tuple[int, int] = Field(description="(master seed, sample index)")

    @property
    def t(self) -> int:
        return int(self.increments.shape[0])

    def partials(self, j: int) -> np.ndarray:
        """S_j(h) = sum of Y_m(h) for m <= j"""
        if j == 0:
            return np.zeros(self.increments.shape[1])
        return np.cumsum(self.increments[:j], axis=0)[j - 1]

    def all_partials(self) -> np.ndarray:
        return np.cumsum(self.increments, axis=0)

class BarrierSpec(BaseModel):
    """Barrier over integer scales 0..t"""
    model_config = ConfigDict(frozen=True)

    kind: BarrierKind
    mu: float
    t: int = Field(ge=1)
    alpha: float = Field(gt=0.0, lt=1.0)
    offset: float = Field(description="y for upper/lower barriers, A for the good event")

class BallotQuery(BaseModel):
    """Gaussian walk barrier query: stay under the barrier, end in I_x"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    j: int = Field(ge=1, description="Horizon")
    sigma2: np.ndarray = Field(description="Per-step increment variances")
    barrier_values: np.ndarray = Field(description="b(1)..b(j)")
    lower_values: Optional[np.ndarray] = Field(default=None, description="Optional lower barrier per step")
    x: float = Field(description="Terminal target")
    delta: float = Field(gt=0.0, le=1.0, description="Window width")
    c: float = Field(default=2.0, ge=1.0, description="Variance bound: sigma2 in [1/c, c]")

    @model_validator(mode="after")
    def _check_shapes(self) -> "BallotQuery":
        if self.sigma2.shape != (self.j,) or self.barrier_values.shape != (self.j,):
            raise ValueError(f"sigma2 and barrier_values must have length j={self.j}")
        if self.lower_values is not None and self.lower_values.shape != (self.j,):
            raise ValueError(f"lower_values must have length j={self.j}")
        if np.any(self.sigma2 < 1.0 / self.c) or np.any(self.sigma2 > self.c):
            raise ValueError(f"sigma2 entries must lie in [{1.0 / self.c}, {self.c}]")
        return self

    def window(self) -> Tuple[float, float]:
        """I_x as (lo, hi); endpoint openness is immaterial for continuous laws"""
        if self.x > 0:
            return self.x, self.x + self.delta
        if self.x < 0:
            return self.x - self.delta, self.x
        return -self.delta, self.delta

class Rectangle(BaseModel):
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    @model_validator(mode="after")
    def _check_order(self) -> "Rectangle":
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise ValueError("rectangle bounds must satisfy lo <= hi")
        return self

class ComparisonQuery(BaseModel):
    s2: float = Field(gt=0.0, description="Common variance")
    rho: float = Field(description="Covariance, |rho| < s2")
    rectangle: Rectangle

    @model_validator(mode="after")
    def _check_rho(self) -> "ComparisonQuery":
        if abs(self.rho) >= self.s2:
            raise ValueError(f"|rho|={abs(self.rho)} must be below s2={self.s2}")
        return self

class ComparisonResult(BaseModel):
    lhs: float
    rhs: float
    factor: float
    holds: bool

class RichardsonResult(BaseModel):
    coarse: float
    fine: float
    difference: float
    extrapolated: float
    converged: bool

class BallotProposition(str, Enum):
    CLOSED_FORM = "closed-form"
    LINEAR_LOWER = "linear-lower"
    LINEAR_UPPER = "linear-upper"
    LOG = "log"
    COMPARISON = "comparison"

class BallotSweep(BaseModel):
    """Contents of a ballot sweep file; unset keys keep these defaults"""
    proposition: BallotProposition = BallotProposition.LINEAR_UPPER
    j_list: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    a: float = 0.2
    b0: float = 2.0
    x_list: Optional[List[float]] = Field(default=None, description="Explicit terminal targets")
    x_fraction: float = Field(default=0.5, description="x = x_fraction * b(j) when x_list is unset")
    delta: float = Field(default=1.0, gt=0.0, le=1.0)
    sigma2: float = Field(default=0.5, gt=0.0)
    t: int = Field(default=64, ge=2)
    k_list: List[int] = Field(default_factory=lambda: [32])
    y: float = Field(default=1.0, description="Logarithmic barrier offset, at most t / (10 log t)")
    s2: float = Field(default=1.0, gt=0.0)
    rho_list: List[float] = Field(default_factory=lambda: [0.0, 0.5])
    rectangles: List[Rectangle] = Field(
        default_factory=lambda: [Rectangle(x_lo=-math.inf, x_hi=0.0, y_lo=-math.inf, y_hi=0.0)]
    )
    n_mc: int = Field(default=0, ge=0, description="Monte Carlo walks per row, 0 to skip")
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0)

class BallotCheckReport(BaseModel):
    """Ratios of DP probabilities to a ballot envelope across a sweep"""
    proposition: str
    rows: List[Dict[str, Any]] = Field(default_factory=list)
    min_ratio: Optional[float] = None
    max_ratio: Optional[float] = None
    spread: Optional[float] = Field(default=None, description="max_ratio / min_ratio")
    fitted_c: Optional[float] = None
    skipped: List[str] = Field(default_factory=list)

class CIEstimate(BaseModel):
    point: float
    lo: float
    hi: float
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    method: CIMethod
    stderr: Optional[float] = None
    excluded: int = Field(default=0, description="Resamples dropped for a zero denominator")

    @model_validator(mode="after")
    def _check_order(self) -> "CIEstimate":
        if not (self.lo <= self.point <= self.hi):
            raise ValueError(f"interval [{self.lo}, {self.hi}] does not contain {self.point}")
        return self

class TailReport(BaseModel):
    """Empirical tail of a maximum against a predicted shape"""
    tail: str = Field(description="right, left or small_interval")
    y_grid: List[float]
    thresholds: List[float]
    hits: List[int]
    n: int
    p_hat: List[float]
    ci_lo: List[float]
    ci_hi: List[float]
    predicted_shape: List[float]
    fitted_slope: Optional[float] = None
    fitted_slope_stderr: Optional[float] = None
    corrected_slope: Optional[float] = Field(default=None, description="Slope after removing the prefactor and Gaussian factor")
    predicted_slope: Optional[float] = None
    dropped_y: List[float] = Field(default_factory=list)
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)
    approximate: bool = False
    extras: Dict[str, Any] = Field(default_factory=dict)

class HittingReport(BaseModel):
    histogram: List[int] = Field(description="Counts of first crossings at scale k+1, k = 0..t-1")
    crossing_count: int
    n: int
    late_range_start: float = Field(description="t - t^alpha")
    late_fraction: Optional[float] = Field(default=None, description="Share of crossings with k+1 > t - t^alpha")
    partition_exact: bool
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)

class CountReport(BaseModel):
    delta: float
    y: float
    z_values: List[int]
    w_values: Optional[List[int]] = None
    mean_z: float
    mean_z2: float
    pz_lower: float
    p_ge_1: float
    stderr_pz: float
    stderr_p: float
    pz_consistent: bool
    second_moment_ratio: Optional[float] = None
    left_envelope: Optional[float] = None
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)

class PairCorrelationBin(BaseModel):
    k_b: int
    n_offsets: int
    joint: float
    product: float
    ratio: Optional[float] = None
    ratio_lo: Optional[float] = None
    ratio_hi: Optional[float] = None
    joint_hits: int
    sparse: bool
    comparison_factor: Optional[float] = None

class PairCorrelationReport(BaseModel):
    y: float
    delta: float
    marginal: float
    zero_offset_joint: float = Field(description="Joint frequency at offset 0, equal to the marginal")
    bins: List[PairCorrelationBin]
    trend_correlation: Optional[float] = Field(default=None, description="Spearman correlation of ratio with k_b over dense bins")
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)

class MomentReport(BaseModel):
    beta: float
    A: float
    log_Z_values: List[float]
    good_event_flags: List[bool]
    log_normalization: float
    quantiles: Dict[str, float]
    markov_curve: List[Tuple[float, float]]
    a_times_p: List[float]
    good_event_curve: List[Tuple[float, float]] = Field(default_factory=list)
    predicted_good_event: List[float] = Field(default_factory=list)
    bounds_hold: bool
    seed: int
    config: Dict[str, Any] = Field(default_factory=dict)

class SuiteCheck(BaseModel):
    """One pinned acceptance check"""
    name: str
    passed: bool
    value: Optional[float] = None
    expected: str = Field(default="", description="Human-readable pass condition")
    detail: str = ""
    seconds: float = 0.0

class SuiteResult(BaseModel):
    suite: str
    checks: List[SuiteCheck] = Field(default_factory=list)
    approximate: bool = False

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

class RunManifest(BaseModel):
    """Everything needed to regenerate one CLI run"""
    run_id: str
    subcommand: str
    argv: List[str]
    config: Optional[Dict[str, Any]] = None
    cache_checksums: Dict[str, str] = Field(default_factory=dict)
    started_at: datetime = Field(default_factory=datetime.now)
    finished_at: Optional[datetime] = None
    output_paths: List[str] = Field(default_factory=list)
    software_version: str
    exit_code: Optional[int] = None

class ExperimentSummary(BaseModel):
    """JSON summary written next to every CSV output"""
    run_id: str
    subcommand: str
    config: Optional[Dict[str, Any]] = None
    seed: Optional[int] = None
    n: Optional[int] = None
    estimates: Dict[str, Any] = Field(default_factory=dict)
    cis: Dict[str, Any] = Field(default_factory=dict)
    predicted: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    approximate: bool = False
