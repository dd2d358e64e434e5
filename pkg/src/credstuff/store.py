"""On-disk suspicious sets: ``<account-hash>.ckf`` filter snapshot plus a
``<account-hash>.json`` sidecar, one pair per account."""

from __future__ import annotations

import os
from pathlib import Path

from .detection import DetectionEngine, SuspiciousSet


def save_sets(engine: DetectionEngine, directory: str | os.PathLike) -> int:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with engine._lock:
        sets = dict(engine.sets)
    for ah, s in sets.items():
        filt, side = s.to_bytes()
        stem = d / ah.hex()
        _atomic_write(stem.with_suffix(".ckf"), filt)
        _atomic_write(stem.with_suffix(".json"), side)
    return len(sets)


def load_sets(engine: DetectionEngine, directory: str | os.PathLike) -> int:
    d = Path(directory)
    if not d.is_dir():
        return 0
    n = 0
    for ckf in sorted(d.glob("*.ckf")):
        side = ckf.with_suffix(".json")
        if not side.exists():
            continue
        s = SuspiciousSet.from_bytes(ckf.read_bytes(), side.read_bytes(), engine.params, engine.rng)
        if s.filter.params.bucket_count != engine.params.bucket_count:
            raise ValueError(f"{ckf.name}: stored filter does not match the configured parameters")
        s.policy = engine.policy
        s.expiration = engine.expiration
        engine.sets[s.account_hash] = s
        n += 1
    return n


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
