from pydantic_settings import BaseSettings
from typing import Optional
import os

class Settings(BaseSettings):
    cache_dir: str = "./cache"
    output_dir: str = "./runs"
    default_seed: int = 20240917
    default_n_samples: int = 10_000
    exact_mode_cap: int = 3
    threads: Optional[int] = None
    batch_size: int = 512
    jitter_scale: float = 1e-12
    surrogate_quad_tol: float = 1e-10
    max_dense_grid: int = 4096
    sieve_segment_odds: int = 1 << 23
    ballot_step_divisor: int = 16
    ballot_extent_sds: float = 8.0
    bootstrap_resamples: int = 1000
    show_progress: bool = True
    log_level: str = "INFO"

    class Config:
        env_file = ".env"
        env_prefix = "EULER_"
        case_sensitive = False

    @property
    def worker_count(self) -> int:
        return self.threads or os.cpu_count() or 1

# Global settings instance
settings = Settings()

# Ensure cache directory exists
os.makedirs(settings.cache_dir, exist_ok=True)
