import logging
import threading
from typing import Any, Dict, List, Optional, Tuple

from cache_store import CacheStore
from config import settings
from covariance_engine import build_toeplitz, covariance_from_values
from experiments import ExperimentRunner
from field_sampler import FieldSampler
from models import BandTable, ModelConfig, SamplerKind, SamplingMode, ToeplitzCovariance
from prime_bands import sieve_bands, surrogate_bands

logger = logging.getLogger(__name__)


class EulerModelSystem:
    """Main entry point: band tables, covariances, samplers and experiment runners"""

    def __init__(self, cache_dir: Optional[str] = None):
        """Initialize the system with its cache"""
        self.cache = CacheStore(cache_dir)
        self._bands: Dict[int, BandTable] = {}
        self._covariances: Dict[Tuple, List[ToeplitzCovariance]] = {}
        self._lock = threading.RLock()

    def get_bands(self, config: ModelConfig) -> BandTable:
        """Band table for the config: memory, then disk cache, then a fresh sieve"""
        if config.mode == SamplingMode.SURROGATE:
            return surrogate_bands(config)
        with self._lock:
            if config.t not in self._bands:
                table = self.cache.load_band_table(config.t)
                if table is None:
                    table = sieve_bands(config)
                    self.cache.save_band_table(table)
                else:
                    logger.info(f"Loaded band table t={config.t} from cache")
                self._bands[config.t] = table
            return self._bands[config.t]

    def _covariance_key(self, config: ModelConfig) -> Tuple:
        return (config.mode, config.t, config.alpha, config.refinement)

    def get_covariances(self, config: ModelConfig) -> List[ToeplitzCovariance]:
        """Factorized per-band Toeplitz covariances on the config grid"""
        key = self._covariance_key(config)
        with self._lock:
            if key not in self._covariances:
                self._covariances[key] = self._load_or_build_covariances(config)
            return self._covariances[key]

    def _load_or_build_covariances(self, config: ModelConfig) -> List[ToeplitzCovariance]:
        bands = self.get_bands(config)
        checksum = bands.checksum
        covariances = []
        for m in range(1, config.t + 1):
            cached = self.cache.load_covariance_values(config, m, m, config.n_points, config.spacing, checksum)
            if cached is not None:
                covariances.append(covariance_from_values(bands, m, m, config.spacing, cached["values"]))
                continue
            cov = build_toeplitz(bands, m, m, config)
            self.cache.save_covariance(config, cov, checksum)
            covariances.append(cov)
        jittered = [c.k for c in covariances if c.jitter > 0]
        if jittered:
            logger.warning(f"Jitter applied to bands {jittered}")
        return covariances

    def get_sampler(self, config: ModelConfig, kind: SamplerKind = SamplerKind.TOEPLITZ,
                    threads: Optional[int] = None) -> FieldSampler:
        if kind == SamplerKind.DIRECT:
            return FieldSampler(config, bands=self.get_bands(config), kind=kind, threads=threads)
        return FieldSampler(config, covariances=self.get_covariances(config), kind=kind, threads=threads)

    def get_runner(self, config: ModelConfig, kind: SamplerKind = SamplerKind.TOEPLITZ,
                   threads: Optional[int] = None) -> ExperimentRunner:
        sampler = self.get_sampler(config, kind, threads)
        covariances = self.get_covariances(config) if kind == SamplerKind.TOEPLITZ else None
        return ExperimentRunner(config, sampler, self.get_bands(config), covariances)

    def cache_checksums(self, config: ModelConfig) -> Dict[str, str]:
        """Checksums of every cache input a run depends on"""
        if config.mode == SamplingMode.SURROGATE:
            return {"bands": "surrogate"}
        return {"bands": self.get_bands(config).checksum}

    def get_system_stats(self) -> Dict[str, Any]:
        try:
            return {
                "cache": self.cache.get_cache_stats(),
                "bands_in_memory": sorted(self._bands),
                "covariance_sets_in_memory": len(self._covariances),
                "threads": settings.worker_count,
            }
        except Exception as e:
            return {"error": str(e)}


# Global system instance
euler_model_system = EulerModelSystem()
