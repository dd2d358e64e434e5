"""Bucketed cuckoo filter whose slots are residues mod r.

Fingerprints live in F = odd residues in [1, 2|F|). Free slots hold values
outside F (uniform over Z_r \\ F when hardened, zero otherwise), so the
matrix can be fed directly into the homomorphic membership test.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass
from typing import Iterator

import xxhash

_SYSRAND = secrets.SystemRandom()
_FP_TWEAK = 0x9E3779B97F4A7C15
_U64 = (1 << 64) - 1
_MAGIC = b"CKF1"
_HEADER = struct.Struct(">4sIHQQI32sI")


class FilterFull(Exception):
    """Insertion gave up after max_kicks evictions; the filter is unchanged."""


class NotFound(KeyError):
    """Deleted element has no matching fingerprint in either bucket."""


@dataclass(frozen=True)
class FilterParams:
    bucket_count: int
    bucket_capacity: int = 16
    fingerprint_space: int = 1 << 32
    max_kicks: int = 500
    version: int = 1
    key_seed: int = 0

    def __post_init__(self):
        beta = self.bucket_count
        if beta < 1 or beta & (beta - 1):
            raise ValueError("bucket_count must be a power of two")
        if beta > 1 << 16:
            raise ValueError("bucket_count must fit in 16 bits")
        if self.bucket_capacity < 1:
            raise ValueError("bucket_capacity must be >= 1")
        if self.fingerprint_space < 1:
            raise ValueError("fingerprint_space must be >= 1")
        if self.max_kicks < 0:
            raise ValueError("max_kicks must be >= 0")

    @classmethod
    def for_capacity(cls, capacity: int, bucket_capacity: int = 16, load: float = 0.98, **kw) -> "FilterParams":
        """Smallest power-of-two bucket count with beta*b*load >= capacity."""
        beta = 1
        while beta * bucket_capacity * load < capacity:
            beta *= 2
        return cls(bucket_count=beta, bucket_capacity=bucket_capacity, **kw)

    @property
    def slots(self) -> int:
        return self.bucket_count * self.bucket_capacity

    @property
    def fp_rate_bound(self) -> float:
        return 2 * self.bucket_capacity / self.fingerprint_space

    def hash_key_for(self, account_hash: bytes) -> int:
        """Per-account hash key; anyone holding the account hash can derive it."""
        return xxhash.xxh64_intdigest(account_hash, seed=self.key_seed)

    def hasher(self, hash_key: int) -> "BucketHasher":
        return BucketHasher(self.bucket_count, self.fingerprint_space, hash_key)

    def check_group_order(self, order: int) -> None:
        if 2 * self.fingerprint_space >= order:
            raise ValueError("fingerprint space does not fit below the group order")


TEST_PARAMS = FilterParams(bucket_count=16, bucket_capacity=16, fingerprint_space=1 << 8)


class BucketHasher:
    """Fingerprint and bucket-index functions for one hash key."""

    __slots__ = ("bucket_count", "fingerprint_space", "hash_key", "_fp_seed", "_mask")

    def __init__(self, bucket_count: int, fingerprint_space: int, hash_key: int):
        self.bucket_count = bucket_count
        self.fingerprint_space = fingerprint_space
        self.hash_key = hash_key & _U64
        self._fp_seed = (hash_key ^ _FP_TWEAK) & _U64
        self._mask = bucket_count - 1

    def fprint(self, x: bytes) -> int:
        h = xxhash.xxh64_intdigest(x, seed=self._fp_seed)
        return 2 * (h % self.fingerprint_space) + 1

    def is_fingerprint(self, v: int) -> bool:
        return v & 1 == 1 and v < 2 * self.fingerprint_space

    def index(self, x: bytes) -> int:
        return xxhash.xxh64_intdigest(x, seed=self.hash_key) & self._mask

    def alt_index(self, i: int, fp: int) -> int:
        return i ^ (xxhash.xxh64_intdigest(fp.to_bytes(8, "big"), seed=self.hash_key) & self._mask)

    def indices_for(self, x: bytes) -> tuple[int, int]:
        i1 = self.index(x)
        return i1, self.alt_index(i1, self.fprint(x))


@dataclass(frozen=True)
class FingerprintEntry:
    bucket: int
    row: int
    fingerprint: int
    inserted_at: int


class CuckooFilter:
    """b x beta matrix X over Z_r plus a parallel timestamp matrix.

    ``matrix[row][bucket]`` is the residue in slot ``row`` of bucket ``bucket``.
    A slot is occupied iff its timestamp is not None.
    """

    def __init__(self, params: FilterParams, order: int, hash_key: int = 0, rng=None,
                 random_free_slots: bool = True):
        params.check_group_order(order)
        self.params = params
        self.order = order
        self.hasher = params.hasher(hash_key)
        self.rng = rng or _SYSRAND
        self.random_free_slots = random_free_slots
        b, beta = params.bucket_capacity, params.bucket_count
        self.matrix = [[self._free_value() for _ in range(beta)] for _ in range(b)]
        self.stamps: list[list[int | None]] = [[None] * beta for _ in range(b)]
        self._count = 0

    @property
    def hash_key(self) -> int:
        return self.hasher.hash_key

    def __len__(self) -> int:
        return self._count

    @property
    def load(self) -> float:
        return self._count / self.params.slots

    def _free_value(self) -> int:
        if not self.random_free_slots:
            return 0
        while True:
            v = self.rng.randrange(self.order)
            if not self.hasher.is_fingerprint(v):
                return v

    def _free_row(self, bucket: int) -> int | None:
        for row, col in enumerate(self.stamps):
            if col[bucket] is None:
                return row
        return None

    def _find(self, bucket: int, fp: int) -> int | None:
        for row in range(self.params.bucket_capacity):
            if self.stamps[row][bucket] is not None and self.matrix[row][bucket] == fp:
                return row
        return None

    def fprint(self, x: bytes) -> int:
        return self.hasher.fprint(x)

    def indices_for(self, x: bytes) -> tuple[int, int]:
        return self.hasher.indices_for(x)

    def insert(self, x: bytes, now: int = 0) -> None:
        self.insert_fingerprint(self.hasher.fprint(x), self.hasher.index(x), now)

    def insert_fingerprint(self, fp: int, i1: int, now: int = 0) -> None:
        i2 = self.hasher.alt_index(i1, fp)
        for bucket in (i1, i2):
            row = self._free_row(bucket)
            if row is not None:
                self.matrix[row][bucket] = fp
                self.stamps[row][bucket] = now
                self._count += 1
                return
        # random-walk eviction; every swap is logged so a failure can be undone
        b = self.params.bucket_capacity
        bucket = self.rng.choice((i1, i2))
        item = (fp, now)
        undo = []
        for _ in range(self.params.max_kicks):
            row = self.rng.randrange(b)
            victim = (self.matrix[row][bucket], self.stamps[row][bucket])
            self.matrix[row][bucket], self.stamps[row][bucket] = item
            undo.append((row, bucket, victim))
            item = victim
            bucket = self.hasher.alt_index(bucket, item[0])
            free = self._free_row(bucket)
            if free is not None:
                self.matrix[free][bucket], self.stamps[free][bucket] = item
                self._count += 1
                return
        for row, bkt, victim in reversed(undo):
            self.matrix[row][bkt], self.stamps[row][bkt] = victim
        raise FilterFull(f"no slot after {self.params.max_kicks} kicks")

    def contains(self, x: bytes) -> bool:
        fp = self.hasher.fprint(x)
        i1 = self.hasher.index(x)
        return self._find(i1, fp) is not None or self._find(self.hasher.alt_index(i1, fp), fp) is not None

    __contains__ = contains

    def delete(self, x: bytes) -> None:
        fp = self.hasher.fprint(x)
        i1 = self.hasher.index(x)
        for bucket in (i1, self.hasher.alt_index(i1, fp)):
            row = self._find(bucket, fp)
            if row is not None:
                self.matrix[row][bucket] = self._free_value()
                self.stamps[row][bucket] = None
                self._count -= 1
                return
        raise NotFound(x)

    def permute_columns(self) -> None:
        b = self.params.bucket_capacity
        for bucket in range(self.params.bucket_count):
            perm = list(range(b))
            self.rng.shuffle(perm)
            vals = [self.matrix[r][bucket] for r in perm]
            stamps = [self.stamps[r][bucket] for r in perm]
            for row in range(b):
                self.matrix[row][bucket] = vals[row]
                self.stamps[row][bucket] = stamps[row]

    def entries(self) -> Iterator[FingerprintEntry]:
        for row, stamps in enumerate(self.stamps):
            for bucket, ts in enumerate(stamps):
                if ts is not None:
                    yield FingerprintEntry(bucket, row, self.matrix[row][bucket], ts)

    def snapshot(self) -> list[list[int]]:
        """Copy of X for a responder; rows are slots, columns are buckets."""
        return [list(row) for row in self.matrix]

    # ------------------------------------------------------------ persistence

    def to_bytes(self) -> bytes:
        p = self.params
        ents = list(self.entries())
        out = [_HEADER.pack(_MAGIC, p.bucket_count, p.bucket_capacity, p.fingerprint_space,
                            self.hash_key, p.max_kicks, self.order.to_bytes(32, "big"), len(ents))]
        for row in self.matrix:
            out.extend(v.to_bytes(32, "big") for v in row)
        out.extend(struct.pack(">HQq", e.bucket, e.fingerprint, e.inserted_at) for e in ents)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, rng=None, random_free_slots: bool = True,
                   version: int = 1, key_seed: int = 0) -> "CuckooFilter":
        try:
            magic, beta, b, fspace, key, kicks, order_b, n = _HEADER.unpack_from(data)
        except struct.error as exc:
            raise ValueError("truncated filter snapshot") from exc
        if magic != _MAGIC:
            raise ValueError("not a filter snapshot")
        params = FilterParams(beta, b, fspace, kicks, version, key_seed)
        order = int.from_bytes(order_b, "big")
        expected = _HEADER.size + 32 * b * beta + 18 * n
        if len(data) != expected:
            raise ValueError("filter snapshot has the wrong length")
        filt = cls.__new__(cls)
        filt.params = params
        filt.order = order
        filt.hasher = params.hasher(key)
        filt.rng = rng or _SYSRAND
        filt.random_free_slots = random_free_slots
        off = _HEADER.size
        filt.matrix = []
        for _ in range(b):
            filt.matrix.append([int.from_bytes(data[off + 32 * k: off + 32 * k + 32], "big") for k in range(beta)])
            off += 32 * beta
        filt.stamps = [[None] * beta for _ in range(b)]
        log = [struct.unpack_from(">HQq", data, off + 18 * k) for k in range(n)]
        slots = [(r, c) for r in range(b) for c in range(beta) if filt.hasher.is_fingerprint(filt.matrix[r][c])]
        if len(slots) != n:
            raise ValueError("entry log does not match occupied slots")
        for (row, bucket), (lb, lfp, ts) in zip(slots, log):
            if lb != bucket or lfp != filt.matrix[row][bucket]:
                raise ValueError("entry log does not match matrix")
            filt.stamps[row][bucket] = ts
        filt._count = n
        return filt
