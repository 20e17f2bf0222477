import json
import hashlib
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from config import settings
from exceptions import CacheError
from models import Band, BandTable, ModelConfig, SamplingMode, ToeplitzCovariance

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _array_checksum(*arrays: np.ndarray) -> str:
    digest = hashlib.sha256()
    for array in arrays:
        digest.update(np.ascontiguousarray(array, dtype=np.float64).tobytes())
    return digest.hexdigest()


class CacheStore:
    """Versioned binary cache for band tables and covariance lag arrays"""

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = Path(cache_dir or settings.cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def band_path(self, t: int) -> Path:
        return self.cache_dir / f"bands_t{t}.npz"

    def covariance_path(self, config: ModelConfig, k: int, l: int, n: int, spacing: float) -> Path:
        return self.cache_dir / (
            f"cov_{config.mode.value}_t{config.t}_a{config.alpha!r}_k{k}_l{l}_n{n}_s{spacing:.12e}.npz"
        )

    def _write(self, path: Path, header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> None:
        tmp = path.with_name(path.name + ".tmp")
        try:
            with open(tmp, "wb") as handle:
                np.savez(handle, header=np.array(json.dumps(header)), **arrays)
            os.replace(tmp, path)
        except OSError as e:
            raise CacheError(f"could not write cache file {path}: {e}") from e

    def _read(self, path: Path, kind: str) -> Optional[Dict[str, Any]]:
        if not path.exists():
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                contents = {name: data[name] for name in data.files}
            header = json.loads(str(contents.pop("header")))
        except (OSError, ValueError, KeyError) as e:
            raise CacheError(f"unreadable cache file {path}: {e}") from e
        if header.get("format_version") != FORMAT_VERSION:
            raise CacheError(f"{path} has format version {header.get('format_version')}, expected {FORMAT_VERSION}")
        if header.get("kind") != kind:
            raise CacheError(f"{path} holds {header.get('kind')}, expected {kind}")
        contents["header"] = header
        return contents

    def save_band_table(self, table: BandTable) -> Path:
        """Store an exact band table; surrogate tables hold no primes and are never cached"""
        if table.mode != SamplingMode.EXACT_PRIME:
            raise CacheError("only exact-prime band tables are cached")
        counts = np.array([b.prime_count for b in table.bands], dtype=np.int64)
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "bands",
            "t": table.t,
            "sieve_limit": table.sieve_limit,
            "checksum": table.checksum,
        }
        path = self.band_path(table.t)
        self._write(path, header, {
            "counts": counts,
            "log_freqs": np.concatenate([b.log_freqs for b in table.bands]),
            "weights": np.concatenate([b.weights for b in table.bands]),
            "variances": table.variances(),
        })
        logger.info(f"Saved band table t={table.t} to {path}")
        return path

    def load_band_table(self, t: int) -> Optional[BandTable]:
        contents = self._read(self.band_path(t), "bands")
        if contents is None:
            return None
        header = contents["header"]
        offsets = np.concatenate([[0], np.cumsum(contents["counts"])])
        bands = [
            Band(
                index=m + 1,
                log_freqs=contents["log_freqs"][offsets[m]:offsets[m + 1]],
                weights=contents["weights"][offsets[m]:offsets[m + 1]],
                variance=float(contents["variances"][m]),
            )
            for m in range(header["t"])
        ]
        table = BandTable(t=header["t"], mode=SamplingMode.EXACT_PRIME, sieve_limit=header["sieve_limit"],
                          approximate=False, bands=bands)
        if table.checksum != header["checksum"]:
            raise CacheError(f"checksum mismatch in {self.band_path(t)}")
        return table

    def save_covariance(self, config: ModelConfig, cov: ToeplitzCovariance, sieve_checksum: str = "") -> Path:
        header = {
            "format_version": FORMAT_VERSION,
            "kind": "covariance",
            "t": config.t,
            "alpha": config.alpha,
            "mode": config.mode.value,
            "k": cov.k,
            "l": cov.l,
            "spacing": cov.spacing,
            "n": cov.n,
            "sieve_checksum": sieve_checksum,
            "checksum": _array_checksum(cov.lags, cov.values),
        }
        path = self.covariance_path(config, cov.k, cov.l, cov.n, cov.spacing)
        self._write(path, header, {"lags": cov.lags, "values": cov.values})
        logger.debug(f"Saved covariance {cov.k}..{cov.l} to {path}")
        return path

    def _read_covariance(self, path: Path) -> Optional[Dict[str, Any]]:
        contents = self._read(path, "covariance")
        if contents is not None and _array_checksum(contents["lags"], contents["values"]) != contents["header"]["checksum"]:
            raise CacheError(f"checksum mismatch in {path}")
        return contents

    def load_covariance_values(self, config: ModelConfig, k: int, l: int, n: int, spacing: float,
                               sieve_checksum: str = "") -> Optional[Dict[str, Any]]:
        """Lags, values and header of a cached covariance, or None"""
        path = self.covariance_path(config, k, l, n, spacing)
        contents = self._read_covariance(path)
        if contents is None:
            return None
        header = contents["header"]
        if sieve_checksum and header.get("sieve_checksum") != sieve_checksum:
            logger.warning(f"{path} was built from another sieve; ignoring it")
            return None
        return contents

    def verify_file(self, name: str) -> str:
        """Re-check the stored checksum of one cache file; raises CacheError on a mismatch"""
        path = self.cache_dir / name
        entry = next((e for e in self.list_entries() if e["file"] == name), None)
        if entry is None:
            raise CacheError(f"no cache file {name}")
        if "error" in entry:
            raise CacheError(f"unreadable cache file {path}: {entry['error']}")
        kind = entry.get("kind")
        if kind == "bands":
            table = self.load_band_table(entry["t"])
            if table is None or self.band_path(entry["t"]).name != name:
                raise CacheError(f"{path} is not the band table for t={entry['t']}")
            return f"{sum(b.prime_count for b in table.bands)} primes"
        if kind == "covariance":
            contents = self._read_covariance(path)
            return f"{contents['values'].size} lags"
        raise CacheError(f"{path} holds unknown kind {kind!r}")

    def list_entries(self) -> List[Dict[str, Any]]:
        entries = []
        for path in sorted(self.cache_dir.glob("*.npz")):
            try:
                with np.load(path, allow_pickle=False) as data:
                    header = json.loads(str(data["header"]))
                entries.append({"file": path.name, "bytes": path.stat().st_size, **header})
            except Exception as e:
                entries.append({"file": path.name, "error": str(e)})
        return entries

    def delete(self, name: str) -> bool:
        """Delete one cache file by name"""
        try:
            (self.cache_dir / name).unlink()
            return True
        except OSError as e:
            logger.error(f"Error deleting cache file {name}: {e}")
            return False

    def get_cache_stats(self) -> Dict[str, Any]:
        try:
            entries = self.list_entries()
            return {
                "cache_dir": str(self.cache_dir),
                "total_files": len(entries),
                "total_bytes": sum(e.get("bytes", 0) for e in entries),
                "band_tables": sum(1 for e in entries if e.get("kind") == "bands"),
                "covariances": sum(1 for e in entries if e.get("kind") == "covariance"),
            }
        except Exception as e:
            return {"error": str(e)}
