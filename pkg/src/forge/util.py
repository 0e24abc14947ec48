"""Small shared helpers: deterministic seeding, rounding, digests, gzip IO."""

from __future__ import annotations

import gzip
import hashlib
import io
import json
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

_U63 = (1 << 63) - 1


def stable_hash64(value: str | int) -> int:
    """Platform-independent 63-bit hash (Python's hash() is salted per process)."""
    if isinstance(value, int):
        data = b"i" + value.to_bytes(16, "little", signed=True)
    else:
        data = b"s" + value.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little") & _U63


def rng_for(seed: int, *labels: str | int) -> np.random.Generator:
    """Independent substream derived from (seed, labels).

    Substreams for distinct label tuples are statistically independent, so
    per-domain / per-stratum sampling can run in any order or in parallel
    without changing results.
    """
    entropy = [seed & _U63] + [stable_hash64(lab) for lab in labels]
    return np.random.default_rng(entropy)


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Split `total` into integer parts proportional to `weights`.

    Parts sum to `total` exactly; leftover units go to the largest fractional
    remainders (ties broken by position, so the split is deterministic).
    """
    if total < 0:
        raise ValueError("total must be non-negative")
    w = np.asarray(weights, dtype=float)
    if len(w) == 0:
        raise ValueError("weights must be non-empty")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    s = w.sum()
    if s <= 0:
        raise ValueError("weights must not all be zero")
    raw = w / s * total
    base = np.floor(raw).astype(np.int64)
    leftover = int(total - base.sum())
    if leftover > 0:
        frac = raw - base
        # argsort is stable, so equal remainders resolve by index order
        order = np.argsort(-frac, kind="stable")
        base[order[:leftover]] += 1
    return [int(x) for x in base]


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(parts: Iterable[str]) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
    return h.hexdigest()


def open_text(path: str | Path, mode: str = "rt") -> IO[str]:
    """Open a text file, transparently handling .gz suffixes.

    Gzip writes pin the header mtime to zero and omit the filename, so
    identical content produces identical bytes across runs.
    """
    path = Path(path)
    if path.suffix == ".gz":
        if "w" in mode or "a" in mode:
            gz = gzip.GzipFile(str(path), mode.replace("t", ""), mtime=0)
            return io.TextIOWrapper(gz, encoding="utf-8")
        return gzip.open(path, mode, encoding="utf-8")  # type: ignore[return-value]
    return open(path, mode, encoding="utf-8")


def dump_json(obj: object, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
