#!/usr/bin/env python3
"""
Command-line harness for the random Euler-product model.

Every subcommand writes {run_id}_{subcommand}.csv and .json into the output
directory and appends one manifest line to manifests.jsonl there.

    python cli.py predict --t 3 --alpha 0.5 --what slope
    python cli.py tail --t 3 --alpha 0.5 --n 200000 --y-grid 0,0.5,1,1.5,2,2.5
    python cli.py tail --side left --t 3 --alpha 0.5 --y-grid=-2,-3,-4
    python cli.py report --suite desk

Negative list values must be attached with '=' so they are not read as flags.
"""

import argparse
import logging
import math
import sys
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError
from scipy.stats import norm

from ballot_numerics import (
    LinearSweepPoint,
    ballot_dp,
    ballot_dp_richardson,
    ballot_mc,
    check_prop_linear,
    check_prop_log,
    gaussian_comparison_check,
    linear_barrier_query,
    log_barrier_query,
)
from config import settings
from covariance_engine import build_toeplitz, covariance_asymptotic, factor_residual
from euler_model_system import EulerModelSystem, euler_model_system
from exceptions import ConfigError, EulerModelError, NumericalError
from experiments import moment_by_parts
from models import (
    BallotProposition,
    BallotQuery,
    BallotSweep,
    BarrierKind,
    ComparisonQuery,
    ExperimentSummary,
    ModelConfig,
    Rectangle,
    RunManifest,
    SamplerKind,
    SamplingMode,
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
from prime_bands import mertens_curve

logger = logging.getLogger(__name__)

SOFTWARE_VERSION = "1.0.0"
MANIFEST_FILE = "manifests.jsonl"

DEFAULT_RIGHT_Y = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
DEFAULT_LEFT_Y = [-2.0, -3.0, -4.0]
DEFAULT_SMALL_Y = [0.5, 1.0, 1.5, 2.0]
DEFAULT_A_LIST = [2.0, 4.0, 8.0]
DEFAULT_GOOD_EVENT_A = [1.0, 2.0, 3.0]
DEFAULT_COUNT_Y = [0.0, 1.0]


# ---------------------------------------------------------------- key-value files

def _parse_int(value: str) -> int:
    try:
        return int(value)
    except ValueError:
        number = float(value)
        if not number.is_integer():
            raise ValueError(f"{value!r} is not an integer")
        return int(number)


def _parse_float_list(value: str) -> List[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _parse_int_list(value: str) -> List[int]:
    return [_parse_int(v.strip()) for v in value.split(",") if v.strip()]


def _parse_rectangles(value: str) -> List[Rectangle]:
    """x_lo:x_hi:y_lo:y_hi entries separated by ';', with inf and -inf allowed"""
    rectangles = []
    for entry in value.split(";"):
        if not entry.strip():
            continue
        parts = [float(p) for p in entry.split(":")]
        if len(parts) != 4:
            raise ValueError(f"rectangle {entry!r} needs four ':'-separated bounds")
        rectangles.append(Rectangle(x_lo=parts[0], x_hi=parts[1], y_lo=parts[2], y_hi=parts[3]))
    return rectangles


# key -> (model field, parser)
CONFIG_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "T": ("t", _parse_int),
    "ALPHA": ("alpha", float),
    "MODE": ("mode", str),
    "SEED": ("seed", _parse_int),
    "N": ("n_samples", _parse_int),
    "REFINEMENT": ("refinement", _parse_int),
    "EXACT_MODE_CAP": ("exact_mode_cap", _parse_int),
}

SWEEP_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "PROPOSITION": ("proposition", str),
    "J_LIST": ("j_list", _parse_int_list),
    "A": ("a", float),
    "B0": ("b0", float),
    "X_LIST": ("x_list", _parse_float_list),
    "X_FRACTION": ("x_fraction", float),
    "DELTA": ("delta", float),
    "SIGMA2": ("sigma2", float),
    "T": ("t", _parse_int),
    "K_LIST": ("k_list", _parse_int_list),
    "Y": ("y", float),
    "S2": ("s2", float),
    "RHO_LIST": ("rho_list", _parse_float_list),
    "RECTANGLES": ("rectangles", _parse_rectangles),
    "N_MC": ("n_mc", _parse_int),
    "SEED": ("seed", _parse_int),
}


def _key_lines(path: Path) -> Dict[str, int]:
    lines: Dict[str, int] = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key = stripped.split("=", 1)[0].strip()
        if key.startswith("export "):
            key = key[len("export "):].strip()
        lines.setdefault(key.upper(), number)
    return lines


def read_key_values(path: str, schema: Dict[str, Tuple[str, Callable[[str], Any]]]) -> Tuple[Dict[str, Any], Dict[str, Tuple[str, int]]]:
    """Parse a KEY=VALUE file against a schema.

    Returns (fields, origins) where origins maps each model field to the
    (key, line) it came from, for error messages.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"config file {file_path} not found")
    lines = _key_lines(file_path)
    fields: Dict[str, Any] = {}
    origins: Dict[str, Tuple[str, int]] = {}
    for raw_key, raw_value in dotenv_values(file_path).items():
        key = raw_key.upper()
        line = lines.get(key, 0)
        if key not in schema:
            raise ConfigError(f"{file_path}:{line}: unknown key {raw_key!r}; expected one of {', '.join(schema)}")
        if raw_value is None or not raw_value.strip():
            raise ConfigError(f"{file_path}:{line}: key {raw_key!r} has no value")
        name, parser = schema[key]
        try:
            fields[name] = parser(raw_value.strip())
        except (ValueError, ValidationError) as e:
            raise ConfigError(f"{file_path}:{line}: invalid value {raw_value!r} for {key}: {e}") from e
        origins[name] = (key, line)
    return fields, origins


def _validation_message(error: ValidationError, origins: Dict[str, Tuple[str, int]], source: str) -> str:
    problems = []
    for item in error.errors():
        field = str(item["loc"][0]) if item["loc"] else "t"
        key, line = origins.get(field, (field.upper(), 0))
        where = f"{source}:{line}: key {key}" if line else f"{key}"
        problems.append(f"{where}: {item['msg']}")
    return "; ".join(problems)


def _build_config(fields: Dict[str, Any], origins: Dict[str, Tuple[str, int]], source: str) -> ModelConfig:
    try:
        return ModelConfig(**fields)
    except ValidationError as e:
        raise ConfigError(_validation_message(e, origins, source)) from e


def validate_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> ModelConfig:
    """Read a run configuration file; overrides (model field names) win over file values"""
    fields, origins = read_key_values(path, CONFIG_KEYS)
    for name, value in (overrides or {}).items():
        if value is not None:
            fields[name] = value
            origins.pop(name, None)
    return _build_config(fields, origins, path)


def load_sweep(path: str) -> BallotSweep:
    fields, origins = read_key_values(path, SWEEP_KEYS)
    try:
        return BallotSweep(**fields)
    except ValidationError as e:
        raise ConfigError(_validation_message(e, origins, path)) from e


# ---------------------------------------------------------------- run bookkeeping

def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-friendly Python values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def new_run_id() -> str:
    return f"{datetime.now():%Y%m%dT%H%M%S}-{uuid.uuid4().hex[:8]}"


class RunContext:
    """Output files and manifest of one CLI run"""

    def __init__(self, subcommand: str, argv: Sequence[str], out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            run_id=new_run_id(),
            subcommand=subcommand,
            argv=list(argv),
            software_version=SOFTWARE_VERSION,
        )

    @property
    def run_id(self) -> str:
        return self.manifest.run_id

    def record(self, config: Optional[ModelConfig], checksums: Optional[Dict[str, str]] = None) -> None:
        if config is not None:
            self.manifest.config = config.model_dump(mode="json")
        if checksums:
            self.manifest.cache_checksums.update(checksums)

    def _path(self, suffix: str, extension: str) -> Path:
        return self.out_dir / f"{self.run_id}_{self.manifest.subcommand}{suffix}.{extension}"

    def write_table(self, frame: pd.DataFrame, suffix: str = "") -> Path:
        path = self._path(suffix, "csv")
        frame = frame.copy()
        frame.insert(0, "run_id", self.run_id)
        frame.to_csv(path, index=False)
        self.manifest.output_paths.append(str(path))
        return path

    def write_summary(self, seed: Optional[int] = None, n: Optional[int] = None, estimates: Optional[Dict] = None,
                      cis: Optional[Dict] = None, predicted: Optional[Dict] = None,
                      checks: Optional[Dict[str, Any]] = None, approximate: bool = False) -> ExperimentSummary:
        summary = ExperimentSummary(
            run_id=self.run_id,
            subcommand=self.manifest.subcommand,
            config=self.manifest.config,
            seed=seed,
            n=n,
            estimates=_plain(estimates or {}),
            cis=_plain(cis or {}),
            predicted=_plain(predicted or {}),
            checks={k: bool(v) for k, v in (checks or {}).items()},
            approximate=approximate,
        )
        path = self._path("", "json")
        path.write_text(summary.model_dump_json(indent=2))
        self.manifest.output_paths.append(str(path))
        return summary

    def finish(self, exit_code: int) -> None:
        self.manifest.finished_at = datetime.now()
        self.manifest.exit_code = exit_code
        with open(self.out_dir / MANIFEST_FILE, "a") as handle:
            handle.write(self.manifest.model_dump_json() + "\n")


# ---------------------------------------------------------------- helpers

def _system(args: argparse.Namespace) -> EulerModelSystem:
    if args.cache_dir:
        return EulerModelSystem(args.cache_dir)
    return euler_model_system


def load_config(args: argparse.Namespace) -> ModelConfig:
    """Config file values overridden by command-line flags"""
    overrides = {
        "t": args.t,
        "alpha": args.alpha,
        "mode": args.mode,
        "seed": args.seed,
        "n_samples": args.n,
        "refinement": args.refinement,
    }
    if args.config:
        config = validate_config(args.config, overrides)
    else:
        config = _build_config({k: v for k, v in overrides.items() if v is not None}, {}, "command line")
    if args.seed is None and not (args.config and "SEED" in _key_lines(Path(args.config))):
        logger.info(f"No seed given; using default seed {config.seed}")
    return config


def _prediction_params(args: argparse.Namespace) -> Tuple[int, float]:
    t, alpha = args.t, args.alpha
    if args.config:
        fields, _ = read_key_values(args.config, CONFIG_KEYS)
        t = fields.get("t") if t is None else t
        alpha = fields.get("alpha") if alpha is None else alpha
    if t is None or alpha is None:
        raise ConfigError("predict needs --t and --alpha (or a config file with T and ALPHA)")
    return t, alpha


def _runner(args: argparse.Namespace, ctx: RunContext):
    config = load_config(args)
    system = _system(args)
    kind = SamplerKind(getattr(args, "sampler", SamplerKind.TOEPLITZ.value))
    runner = system.get_runner(config, kind, args.threads)
    ctx.record(config, system.cache_checksums(config))
    return config, runner


def _first(values: Optional[List[float]], default: float) -> float:
    return values[0] if values else default


# ---------------------------------------------------------------- subcommands

def cmd_sieve(args: argparse.Namespace, ctx: RunContext) -> int:
    config = load_config(args)
    if config.mode != SamplingMode.EXACT_PRIME:
        raise ConfigError("sieve needs --mode exact-prime")
    system = _system(args)
    table = system.get_bands(config)
    ctx.record(config, system.cache_checksums(config))

    variances = table.variances()
    ctx.write_table(pd.DataFrame({
        "band": [b.index for b in table.bands],
        "prime_count": [b.prime_count for b in table.bands],
        "variance": variances,
        "deviation_from_half": variances - 0.5,
    }))
    estimates: Dict[str, Any] = {
        "sieve_limit": table.sieve_limit,
        "variances": variances,
        "total_variance": table.total_variance(),
    }
    checks: Dict[str, bool] = {}
    if args.mertens_x:
        residuals = mertens_curve(args.mertens_x)
        estimates["mertens"] = dict(zip([str(x) for x in args.mertens_x], residuals))
        if len(residuals) >= 2:
            checks["mertens_stable"] = abs(residuals[-1] - residuals[-2]) < 0.01
    ctx.write_summary(seed=config.seed, estimates=estimates, checks=checks)

    print(f"✅ Sieved t={config.t} up to {table.sieve_limit}")
    for band in table.bands:
        print(f"   band {band.index}: {band.prime_count} primes, variance {band.variance:.9f}")
    return 0


def cmd_cov(args: argparse.Namespace, ctx: RunContext) -> int:
    config = load_config(args)
    system = _system(args)
    if args.k is None:
        covariances = system.get_covariances(config)
    else:
        covariances = [build_toeplitz(system.get_bands(config), args.k, args.l or args.k, config)]
    ctx.record(config, system.cache_checksums(config))

    frames = []
    estimates = {}
    for cov in covariances:
        label = f"{cov.k}..{cov.l}"
        frames.append(pd.DataFrame({
            "k": cov.k,
            "l": cov.l,
            "lag_index": np.arange(cov.n),
            "delta_h": cov.lags,
            "value": cov.values,
            "regime": [covariance_asymptotic(cov.k, cov.l, float(d)).regime.value for d in cov.lags],
        }))
        estimates[label] = {
            "variance": cov.values[0],
            "factor_kind": cov.factor_kind,
            "jitter": cov.jitter,
            "min_eigenvalue": cov.min_eigenvalue,
            "factor_residual": factor_residual(cov),
        }
    ctx.write_table(pd.concat(frames, ignore_index=True))
    ctx.write_summary(seed=config.seed, estimates=estimates,
                      checks={"factorized": all(cov.factor is not None for cov in covariances)},
                      approximate=config.mode == SamplingMode.SURROGATE)

    print(f"✅ Covariance on {config.n_points} grid points (spacing {config.spacing:.7f})")
    for label, info in estimates.items():
        print(f"   {label}: variance {info['variance']:.9f}, {info['factor_kind']}, residual {info['factor_residual']:.2e}")
    return 0


def cmd_sample(args: argparse.Namespace, ctx: RunContext) -> int:
    config, runner = _runner(args, ctx)
    sampler = runner.sampler
    n = args.n or config.n_samples
    centre = sampler.points.size // 2
    points = sampler.points

    def batch_summary(inc: np.ndarray, start: int) -> np.ndarray:
        field = inc.sum(axis=1)
        return np.column_stack([
            np.arange(start, start + field.shape[0]),
            field.max(axis=1),
            points[field.argmax(axis=1)],
            field[:, centre],
        ])

    rows = np.concatenate(sampler.map_batches(batch_summary, n, desc="sample"))
    frame = pd.DataFrame(rows, columns=["sample_id", "max_field", "argmax_h", "field_at_0"])
    frame["sample_id"] = frame["sample_id"].astype(int)
    estimates: Dict[str, Any] = {
        "mean_max": frame["max_field"].mean(),
        "variance_at_0": frame["field_at_0"].var(ddof=1),
        "band_variance_sum": runner.total_variance,
    }
    if config.t >= 2:
        frame["recentered_max"] = frame["max_field"] - slope_mu(config.t, config.alpha) * config.t
        estimates["mean_recentered_max"] = frame["recentered_max"].mean()
    ctx.write_table(frame)

    if args.dump_field:
        count = min(args.dump_field, n)
        fields = sampler.sample_batch(0, count).sum(axis=1)
        ctx.write_table(pd.DataFrame({
            "sample_id": np.repeat(np.arange(count), points.size),
            "h": np.tile(points, count),
            "S_t": fields.ravel(),
        }), suffix="_field")
    ctx.write_summary(seed=config.seed, n=n, estimates=estimates, approximate=runner.approximate)

    print(f"✅ Drew {n} samples on {points.size} points ({sampler.kind.value})")
    print(f"📊 mean max {estimates['mean_max']:.4f}, Var S_t(0) {estimates['variance_at_0']:.4f} "
          f"(bands sum {runner.total_variance:.4f})")
    return 0


def cmd_predict(args: argparse.Namespace, ctx: RunContext) -> int:
    t, alpha = _prediction_params(args)
    mu = slope_mu(t, alpha)
    ctx.manifest.config = {"t": t, "alpha": alpha}
    what = args.what
    ys = args.y_grid or [0.0]

    if what == "slope":
        rows = [{"quantity": "slope", "value": mu}]
    elif what == "theta":
        rows = [{"quantity": "theta", "value": theta(t, alpha)}]
    elif what == "beta-c":
        rows = [{"quantity": "beta_c", "value": critical_beta(t, alpha)}]
    elif what == "normalization":
        beta = critical_beta(t, alpha) if args.beta is None else args.beta
        rows = [{"quantity": "log_normalization", "beta": beta, "value": moment_normalization(t, alpha, beta)}]
    elif what == "threshold":
        rows = [{"y": y, "value": threshold_log_max(t, alpha, y)} for y in ys]
    elif what == "right-tail":
        rows = [{"y": y, "value": predicted_right_tail(t, alpha, y), **right_tail_prefactors(t, alpha, y)}
                for y in ys]
    elif what == "left-tail":
        rows = [{"y": y, "value": predicted_left_tail(t, alpha, y)} for y in ys]
    else:
        spec = make_barrier(BarrierKind(args.barrier_kind), t, alpha, ys[0])
        rows = [{"k": k, "value": v} for k, v in enumerate(barrier_values(spec))]

    frame = pd.DataFrame(rows)
    ctx.write_table(frame)
    ctx.write_summary(estimates={"rows": rows}, predicted={"slope": mu})
    if len(rows) == 1:
        print(f"{rows[0]['value']:.10g}")
    else:
        print(frame.to_string(index=False))
    return 0


def _closed_form_window(sigma2: float, barrier_height: float, q: BallotQuery) -> float:
    lo, hi = q.window()
    hi = min(hi, barrier_height)
    if hi <= lo:
        return 0.0
    sd = math.sqrt(sigma2)
    return float(norm.cdf(hi / sd) - norm.cdf(lo / sd))


def _sweep_x_values(sweep: BallotSweep, barrier_j: float) -> List[float]:
    return list(sweep.x_list) if sweep.x_list is not None else [sweep.x_fraction * barrier_j]


def run_ballot_sweep(sweep: BallotSweep) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """Rows of (params, dp, mc, envelope, ratio) and a report summary"""
    rows: List[Dict[str, Any]] = []
    meta: Dict[str, Any] = {"proposition": sweep.proposition.value}

    def with_mc(row: Dict[str, Any], q: BallotQuery) -> Dict[str, Any]:
        if sweep.n_mc:
            estimate, stderr = ballot_mc(q, sweep.n_mc, sweep.seed)
            row.update(mc=estimate, mc_stderr=stderr,
                       mc_agrees=abs(row["dp"] - estimate) <= 3.0 * stderr + 1e-12)
        return row

    if sweep.proposition == BallotProposition.CLOSED_FORM:
        barrier_height = sweep.a + sweep.b0
        for x in sweep.x_list or [0.0]:
            q = BallotQuery(j=1, sigma2=np.array([sweep.sigma2]), barrier_values=np.array([barrier_height]),
                            x=x, delta=sweep.delta, c=max(2.0, sweep.sigma2, 1.0 / sweep.sigma2))
            dp = ballot_dp(q)
            exact = _closed_form_window(sweep.sigma2, barrier_height, q)
            rows.append(with_mc({"j": 1, "x": x, "delta": sweep.delta, "barrier_j": barrier_height,
                                 "dp": dp, "exact": exact, "abs_error": abs(dp - exact)}, q))
        meta["max_abs_error"] = max(r["abs_error"] for r in rows)

    elif sweep.proposition in (BallotProposition.LINEAR_LOWER, BallotProposition.LINEAR_UPPER):
        points = []
        for j in sweep.j_list:
            barrier_j = sweep.a * j + sweep.b0
            for x in _sweep_x_values(sweep, barrier_j):
                points.append(LinearSweepPoint(j=j, a=sweep.a, b0=sweep.b0, x=x,
                                               delta=sweep.delta, sigma2=sweep.sigma2))
        kind = "lower" if sweep.proposition == BallotProposition.LINEAR_LOWER else "upper"
        report = check_prop_linear(points, kind)
        by_key = {(p.j, p.x): p for p in points}
        for row in report.rows:
            point = by_key[(row["j"], row["x"])]
            q = linear_barrier_query(point)
            richardson = ballot_dp_richardson(q)
            row.update(dp_half_step=richardson.fine, richardson_converged=richardson.converged)
            rows.append(with_mc(dict(row), q))
        meta.update(min_ratio=report.min_ratio, max_ratio=report.max_ratio, spread=report.spread,
                    fitted_c=report.fitted_c, skipped=report.skipped)

    elif sweep.proposition == BallotProposition.LOG:
        x_values = sweep.x_list if sweep.x_list is not None else [0.0]
        report = check_prop_log(sweep.t, sweep.k_list, sweep.y, x_values, sweep.delta)
        for row in report.rows:
            q = log_barrier_query(sweep.t, row["k"], sweep.y, row["x"], sweep.delta)
            rows.append(with_mc(dict(row), q))
        meta.update(min_ratio=report.min_ratio, max_ratio=report.max_ratio, spread=report.spread,
                    skipped=report.skipped)

    else:
        for rho in sweep.rho_list:
            for rect in sweep.rectangles:
                result = gaussian_comparison_check(ComparisonQuery(s2=sweep.s2, rho=rho, rectangle=rect))
                rows.append({"s2": sweep.s2, "rho": rho, **rect.model_dump(), **result.model_dump()})
        meta["all_hold"] = all(r["holds"] for r in rows)

    return rows, meta


def cmd_ballot(args: argparse.Namespace, ctx: RunContext) -> int:
    sweep = load_sweep(args.sweep) if args.sweep else BallotSweep(proposition=BallotProposition(args.proposition))
    if args.n_mc is not None:
        sweep = sweep.model_copy(update={"n_mc": args.n_mc})
    if args.seed is not None:
        sweep = sweep.model_copy(update={"seed": args.seed})
    ctx.manifest.config = sweep.model_dump(mode="json")

    rows, meta = run_ballot_sweep(sweep)
    ctx.write_table(pd.DataFrame(rows))
    checks = {}
    if any("mc_agrees" in r for r in rows):
        checks["dp_mc_agree"] = all(r.get("mc_agrees", True) for r in rows)
    if any("richardson_converged" in r for r in rows):
        checks["richardson_converged"] = all(r["richardson_converged"] for r in rows)
    if "all_hold" in meta:
        checks["comparison_holds"] = meta["all_hold"]
    ctx.write_summary(seed=sweep.seed, n=sweep.n_mc or None, estimates=meta, checks=checks)

    print(f"✅ Ballot sweep '{sweep.proposition.value}': {len(rows)} rows")
    if meta.get("spread") is not None:
        print(f"📊 ratio range [{meta['min_ratio']:.4g}, {meta['max_ratio']:.4g}], spread {meta['spread']:.3f}")
    for name, ok in checks.items():
        print(f"   {'✅' if ok else '❌'} {name}")
    return 0


def cmd_tail(args: argparse.Namespace, ctx: RunContext) -> int:
    config, runner = _runner(args, ctx)
    n = args.n or config.n_samples
    if args.side == "right":
        report = runner.estimate_right_tail(args.y_grid or DEFAULT_RIGHT_Y, n, args.threshold_shift)
    elif args.side == "left":
        report = runner.estimate_left_tail(args.y_grid or DEFAULT_LEFT_Y, n)
    else:
        report = runner.small_interval_max_tail(args.j or config.t, args.y_grid or DEFAULT_SMALL_Y, n)

    ctx.write_table(pd.DataFrame({
        "y": report.y_grid,
        "threshold": report.thresholds,
        "hits": report.hits,
        "n": report.n,
        "p_hat": report.p_hat,
        "ci_lo": report.ci_lo,
        "ci_hi": report.ci_hi,
        "predicted_shape": report.predicted_shape,
    }))
    checks = {k: v for k, v in report.extras.items() if k in ("monotone", "deficiency_decreasing")}
    ctx.write_summary(
        seed=config.seed,
        n=n,
        estimates={"fitted_slope": report.fitted_slope, "corrected_slope": report.corrected_slope,
                   "dropped_y": report.dropped_y, **report.extras},
        cis={"fitted_slope_stderr": report.fitted_slope_stderr},
        predicted={"slope": report.predicted_slope, "shape": report.predicted_shape},
        checks=checks,
        approximate=report.approximate,
    )

    print(f"✅ {report.tail} tail, n={n}")
    for y, p, lo, hi in zip(report.y_grid, report.p_hat, report.ci_lo, report.ci_hi):
        print(f"   y={y:+.2f}: p_hat={p:.5f} [{lo:.5f}, {hi:.5f}]")
    if report.fitted_slope is not None:
        print(f"📊 fitted slope {report.fitted_slope:.4f} ± {report.fitted_slope_stderr:.4f} "
              f"(predicted {report.predicted_slope:.4f})")
    return 0


def cmd_moments(args: argparse.Namespace, ctx: RunContext) -> int:
    config, runner = _runner(args, ctx)
    n = args.n or config.n_samples
    A_list = args.A_list or DEFAULT_A_LIST
    report = runner.moment_markov_curve(args.beta, A_list, n, good_event_A=args.good_event_A,
                                        good_event_A_list=args.good_event_A_list or DEFAULT_GOOD_EVENT_A)
    ctx.write_table(pd.DataFrame({
        "A": [A for A, _ in report.markov_curve],
        "p_exceed": [p for _, p in report.markov_curve],
        "a_times_p": report.a_times_p,
    }))
    ctx.write_table(pd.DataFrame({
        "sample_id": np.arange(len(report.log_Z_values)),
        "log_Z": report.log_Z_values,
        "good_event": report.good_event_flags,
    }), suffix="_samples")

    estimates: Dict[str, Any] = {
        "beta": report.beta,
        "quantiles": report.quantiles,
        "markov_curve": report.markov_curve,
        "good_event_curve": report.good_event_curve,
        "good_event_steps": runner.good_event_ratios(args.good_event_A_list or DEFAULT_GOOD_EVENT_A, n),
    }
    positive = [v for v in report.a_times_p if v > 0]
    checks: Dict[str, bool] = {"log_domain_bounds": report.bounds_hold}
    if len(positive) == len(report.a_times_p) and positive:
        checks["a_times_p_within_factor_3"] = max(positive) / min(positive) <= 3.0

    if args.by_parts:
        errors = [moment_by_parts(sample, report.beta)["relative_error"]
                  for sample in runner.sampler.iter_samples(args.by_parts)]
        estimates["by_parts_max_relative_error"] = max(errors)
        checks["by_parts_within_1pct"] = max(errors) < 0.01
    if args.high_point_y:
        high = runner.high_point_curve(args.high_point_y, args.good_event_A, n)
        estimates["high_points"] = high
        ctx.write_table(pd.DataFrame({"y": high["y"], "mean_measure": high["mean_measure"]}),
                        suffix="_high_points")
    if args.mgf:
        mgf = runner.mgf_identity(1.0, n)
        estimates["mgf"] = mgf
        checks["mgf_within_3_stderr"] = abs(mgf["z_score"]) <= 3.0

    ctx.write_summary(seed=config.seed, n=n, estimates=estimates,
                      predicted={"log_normalization": report.log_normalization,
                                 "good_event": report.predicted_good_event},
                      checks=checks, approximate=runner.approximate)

    print(f"✅ Moments at beta={report.beta:.4f}, n={n}")
    for A, p in report.markov_curve:
        print(f"   A={A:g}: P(Z_norm > A)={p:.5f}, A*P={A * p:.5f}")
    for name, ok in checks.items():
        print(f"   {'✅' if ok else '❌'} {name}")
    return 0


def cmd_counts(args: argparse.Namespace, ctx: RunContext) -> int:
    config, runner = _runner(args, ctx)
    n = args.n or config.n_samples
    rows = []
    for y in args.y_grid or DEFAULT_COUNT_Y:
        report = runner.count_exceedances(args.delta, y, n)
        rows.append({
            "y": y,
            "delta": args.delta,
            "mean_z": report.mean_z,
            "mean_z2": report.mean_z2,
            "pz_lower": report.pz_lower,
            "p_ge_1": report.p_ge_1,
            "stderr_pz": report.stderr_pz,
            "stderr_p": report.stderr_p,
            "pz_consistent": report.pz_consistent,
            "second_moment_ratio": report.second_moment_ratio,
            "left_envelope": report.left_envelope,
        })
    ctx.write_table(pd.DataFrame(rows))
    ctx.write_summary(seed=config.seed, n=n, estimates={"rows": rows},
                      checks={"pz_consistent": all(r["pz_consistent"] for r in rows)},
                      approximate=runner.approximate)

    print(f"✅ Exceedance counts, delta={args.delta}, n={n}")
    for r in rows:
        mark = "✅" if r["pz_consistent"] else "❌"
        print(f"   {mark} y={r['y']:+.2f}: PZ bound {r['pz_lower']:.5f} vs P(Z>=1) {r['p_ge_1']:.5f}")
    return 0


def cmd_hitting(args: argparse.Namespace, ctx: RunContext) -> int:
    config, runner = _runner(args, ctx)
    n = args.n or config.n_samples
    barrier = make_barrier(BarrierKind.UPPER, config.t, config.alpha, _first(args.y_grid, 0.0))
    report = runner.first_hitting_histogram(barrier, n, args.raise_by)
    scales = np.arange(config.t) + 1
    ctx.write_table(pd.DataFrame({
        "k": scales - 1,
        "scale": scales,
        "count": report.histogram,
        "late_range": scales > report.late_range_start,
    }))
    checks = {"partition_exact": report.partition_exact}
    if report.late_fraction is not None:
        checks["late_range_majority"] = report.late_fraction > 0.5
    ctx.write_summary(seed=config.seed, n=n,
                      estimates={"crossing_count": report.crossing_count, "late_fraction": report.late_fraction,
                                 "histogram": report.histogram},
                      checks=checks, approximate=runner.approximate)

    print(f"✅ First hitting: {report.crossing_count} of {n} samples cross")
    print(f"   histogram {report.histogram}, late fraction {report.late_fraction}")
    return 0


def cmd_paircorr(args: argparse.Namespace, ctx: RunContext) -> int:
    config, runner = _runner(args, ctx)
    n = args.n or config.n_samples
    report = runner.pair_correlation(_first(args.y_grid, 0.0), n, delta=args.delta)
    ctx.write_table(pd.DataFrame([b.model_dump() for b in report.bins]))
    ctx.write_summary(seed=config.seed, n=n,
                      estimates={"marginal": report.marginal, "zero_offset_joint": report.zero_offset_joint,
                                 "trend_correlation": report.trend_correlation},
                      checks={"offset_zero_matches_marginal": math.isclose(report.marginal,
                                                                           report.zero_offset_joint)},
                      approximate=runner.approximate)

    print(f"✅ Pair correlation, marginal {report.marginal:.5f}")
    for b in report.bins:
        ratio = f"{b.ratio:.3f}" if b.ratio is not None else "n/a"
        print(f"   k_b={b.k_b}: joint {b.joint:.3e}, ratio {ratio}{' (sparse)' if b.sparse else ''}")
    return 0


def cmd_report(args: argparse.Namespace, ctx: RunContext) -> int:
    from desk_suite import run_suite

    result = run_suite(args.suite, _system(args), threads=args.threads)
    ctx.write_table(pd.DataFrame([c.model_dump() for c in result.checks]))
    ctx.write_summary(estimates={c.name: c.value for c in result.checks},
                      checks={c.name: c.passed for c in result.checks},
                      approximate=result.approximate)

    print(f"📊 Suite '{args.suite}': {len(result.checks)} checks")
    for check in result.checks:
        print(f"   {'✅' if check.passed else '❌'} {check.name}: {check.detail}")
    if not result.passed:
        print(f"❌ Failed checks: {', '.join(result.failed)}")
        return 4
    print("✅ All checks passed")
    return 0


HANDLERS: Dict[str, Callable[[argparse.Namespace, RunContext], int]] = {
    "sieve": cmd_sieve,
    "cov": cmd_cov,
    "sample": cmd_sample,
    "predict": cmd_predict,
    "ballot": cmd_ballot,
    "tail": cmd_tail,
    "moments": cmd_moments,
    "counts": cmd_counts,
    "hitting": cmd_hitting,
    "paircorr": cmd_paircorr,
    "report": cmd_report,
}


# ---------------------------------------------------------------- parser

def _float_list(value: str) -> List[float]:
    try:
        return _parse_float_list(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=VALUE run file (T, ALPHA, MODE, SEED, N, REFINEMENT, EXACT_MODE_CAP)")
    common.add_argument("--t", type=int, help="Number of scales")
    common.add_argument("--alpha", type=float, help="Interval exponent in (0, 1)")
    common.add_argument("--mode", choices=[m.value for m in SamplingMode])
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int, help="Monte Carlo sample count")
    common.add_argument("--refinement", type=int, help="Grid refinement factor")
    common.add_argument("--y-grid", dest="y_grid", type=_float_list, help="Comma-separated y values")
    common.add_argument("--A-list", dest="A_list", type=_float_list, help="Comma-separated A values")
    common.add_argument("--beta", type=float, help="Moment exponent (default beta_c)")
    common.add_argument("--delta", type=float, default=1.0, help="Window width")
    common.add_argument("--threads", type=int, help="Worker threads (default: hardware parallelism)")
    common.add_argument("--out", help=f"Output directory (default {settings.output_dir})")
    common.add_argument("--cache-dir", dest="cache_dir", help="Cache directory (env EULER_CACHE_DIR)")
    common.add_argument("--verbose", action="store_true", help="Debug logging and tracebacks")

    parser = argparse.ArgumentParser(prog="cli.py", description="Random Euler-product model simulator")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("sieve", parents=[common], help="Sieve primes and report band variances")
    p.add_argument("--mertens-x", dest="mertens_x", type=_float_list, help="x values for Mertens residuals")

    p = sub.add_parser("cov", parents=[common], help="Toeplitz covariance lags on the grid")
    p.add_argument("--k", type=int, help="First band (default: every band on its own)")
    p.add_argument("--l", type=int, help="Last band (default k)")

    p = sub.add_parser("sample", parents=[common], help="Draw fields and summarize their maxima")
    p.add_argument("--sampler", choices=[k.value for k in SamplerKind], default=SamplerKind.TOEPLITZ.value)
    p.add_argument("--dump-field", dest="dump_field", type=int, default=0, help="Write S_t of the first N samples")

    p = sub.add_parser("predict", parents=[common], help="Closed-form predictions")
    p.add_argument("--what", required=True,
                   choices=["slope", "theta", "threshold", "right-tail", "left-tail", "beta-c", "normalization",
                            "barrier"])
    p.add_argument("--barrier-kind", dest="barrier_kind", choices=[k.value for k in BarrierKind],
                   default=BarrierKind.UPPER.value)

    p = sub.add_parser("ballot", parents=[common], help="Ballot oracles and comparison inequality")
    p.add_argument("--sweep", help="KEY=VALUE sweep file")
    p.add_argument("--proposition", choices=[b.value for b in BallotProposition],
                   default=BallotProposition.LINEAR_UPPER.value)
    p.add_argument("--n-mc", dest="n_mc", type=int, help="Monte Carlo walks per row")

    p = sub.add_parser("tail", parents=[common], help="Tail of the maximum")
    p.add_argument("--side", choices=["right", "left", "small"], default="right")
    p.add_argument("--j", type=int, help="Scale for --side small")
    p.add_argument("--threshold-shift", dest="threshold_shift", type=float, default=0.0)
    p.add_argument("--sampler", choices=[k.value for k in SamplerKind], default=SamplerKind.TOEPLITZ.value)

    p = sub.add_parser("moments", parents=[common], help="Critical moment and good event")
    p.add_argument("--good-event-A", dest="good_event_A", type=float, default=1.0)
    p.add_argument("--good-event-A-list", dest="good_event_A_list", type=_float_list)
    p.add_argument("--by-parts", dest="by_parts", type=int, default=0, help="Samples for the by-parts identity")
    p.add_argument("--mgf", action="store_true", help="Also check the MGF identity")
    p.add_argument("--high-point-y", dest="high_point_y", type=_float_list,
                   help="y values for the mean high-point measure S(mu t + y)")

    sub.add_parser("counts", parents=[common], help="Exceedance counts and Paley-Zygmund bound")

    p = sub.add_parser("hitting", parents=[common], help="First hitting scale histogram")
    p.add_argument("--raise-by", dest="raise_by", type=float, default=0.0)

    sub.add_parser("paircorr", parents=[common], help="Pair correlation by branching time")

    p = sub.add_parser("report", parents=[common], help="Pinned acceptance suite")
    p.add_argument("--suite", choices=["desk", "smoke"], default="smoke")
    return parser


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def _fail(message: str, verbose: bool) -> None:
    print(f"❌ {message}", file=sys.stderr)
    if verbose:
        logger.exception("Run failed")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    _configure_logging(args.verbose)
    ctx = RunContext(args.subcommand, argv, Path(args.out or settings.output_dir))
    try:
        code = HANDLERS[args.subcommand](args, ctx)
    except ConfigError as e:
        _fail(f"Configuration error: {e}", args.verbose)
        code = e.exit_code
    except ValidationError as e:
        _fail(f"Configuration error: {e}", args.verbose)
        code = ConfigError.exit_code
    except NumericalError as e:
        _fail(f"Numerical failure ({type(e).__name__}): {e}", args.verbose)
        code = e.exit_code
    except EulerModelError as e:
        _fail(f"Error: {e}", args.verbose)
        code = e.exit_code
    except Exception as e:
        _fail(f"Unexpected error: {e}", args.verbose)
        code = 1
    ctx.finish(code)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
