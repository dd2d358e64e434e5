"""One-round private membership test against a cuckoo-filter matrix.

The requester encrypts indicator vectors for its two candidate buckets plus
the negated fingerprint; the responder returns, for every slot row and both
candidate buckets, an encryption of ``M * (X[row] . q_col - fp)`` which is zero
exactly when that slot holds the fingerprint.
"""

from __future__ import annotations

import logging
import secrets
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

from .cuckoo import BucketHasher
from .group import (
    GROUPS_BY_WIRE_ID,
    Ciphertext,
    InvalidElement,
    KeyPair,
    PublicKey,
    encrypt,
    gen,
    validate,
    zero_test,
)

log = logging.getLogger(__name__)
_SYSRAND = secrets.SystemRandom()


class MalformedQuery(ValueError):
    pass


class MalformedResponse(ValueError):
    pass


@dataclass(frozen=True)
class Hardening:
    permute_columns: bool = True
    random_free_slots: bool = True
    shuffle_response: bool = True


HARDENED = Hardening()
UNHARDENED = Hardening(False, False, False)


@dataclass(frozen=True)
class PmtQuery:
    pk: PublicKey
    f: Ciphertext
    q: tuple[tuple[Ciphertext, Ciphertext], ...]

    @property
    def group(self):
        return self.pk.group

    @property
    def bucket_count(self) -> int:
        return len(self.q)

    def to_bytes(self) -> bytes:
        g = self.group
        parts = [struct.pack(">BH", g.wire_id, len(self.q)), g.encode(self.pk.u_point), self.f.to_bytes(g)]
        for c0, c1 in self.q:
            parts.append(c0.to_bytes(g))
            parts.append(c1.to_bytes(g))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PmtQuery":
        try:
            gid, beta = struct.unpack_from(">BH", data)
            g = GROUPS_BY_WIRE_ID[gid]
        except (struct.error, KeyError) as exc:
            raise MalformedQuery("bad query header") from exc
        n = g.element_size
        if len(data) != 3 + n + 2 * n * (1 + 2 * beta):
            raise MalformedQuery("query length does not match bucket count")
        els = [data[3 + n * k: 3 + n * (k + 1)] for k in range((len(data) - 3) // n)]
        try:
            vals = [g.decode(e) for e in els]
        except InvalidElement as exc:
            raise MalformedQuery(str(exc)) from exc
        pk = PublicKey(g, vals[0])
        f = Ciphertext(vals[1], vals[2])
        cts = [Ciphertext(vals[k], vals[k + 1]) for k in range(3, len(vals), 2)]
        q = tuple((cts[2 * k], cts[2 * k + 1]) for k in range(beta))
        return cls(pk, f, q)


@dataclass(frozen=True)
class PmtResponse:
    entries: tuple[Ciphertext, ...]

    def to_bytes(self, group) -> bytes:
        return struct.pack(">BH", group.wire_id, len(self.entries)) + b"".join(
            c.to_bytes(group) for c in self.entries
        )

    @classmethod
    def from_bytes(cls, data: bytes, group) -> "PmtResponse":
        try:
            gid, count = struct.unpack_from(">BH", data)
        except struct.error as exc:
            raise MalformedResponse("bad response header") from exc
        if gid != group.wire_id:
            raise MalformedResponse("response group does not match query group")
        n = 2 * group.element_size
        if len(data) != 3 + n * count:
            raise MalformedResponse("response length mismatch")
        try:
            return cls(tuple(Ciphertext.from_bytes(group, data[3 + n * k: 3 + n * (k + 1)]) for k in range(count)))
        except ValueError as exc:
            raise MalformedResponse(str(exc)) from exc


@dataclass
class PrecomputePool:
    """Fresh keypair with 2*beta - 2 encryptions of 0 and two of 1. Single use."""

    keypair: KeyPair
    zeros: list[Ciphertext]
    ones: list[Ciphertext]

    @classmethod
    def generate(cls, group, bucket_count: int, rng=None) -> "PrecomputePool":
        kp = gen(group, rng)
        zeros = [encrypt(kp.pk, 0, rng) for _ in range(2 * bucket_count - 2)]
        ones = [encrypt(kp.pk, 1, rng) for _ in range(2)]
        return cls(kp, zeros, ones)


def build_query(x: bytes, hasher: BucketHasher, group=None, pool: PrecomputePool | None = None,
                rng=None) -> tuple[PmtQuery, KeyPair]:
    """Encrypt the bucket indicators and -fprint(x) under a fresh key."""
    beta = hasher.bucket_count
    if pool is None:
        if group is None:
            raise ValueError("need a group or a precompute pool")
        pool = PrecomputePool.generate(group, beta, rng)
    elif len(pool.zeros) != 2 * beta - 2 or len(pool.ones) != 2:
        raise ValueError("precompute pool does not match the bucket count")
    kp = pool.keypair
    r = kp.pk.group.order
    i1, i2 = hasher.indices_for(x)
    zeros = iter(pool.zeros)
    cols = []
    for j, idx in enumerate((i1, i2)):
        cols.append([pool.ones[j] if k == idx else next(zeros) for k in range(beta)])
    f = encrypt(kp.pk, (-hasher.fprint(x)) % r, rng)
    q = tuple((cols[0][k], cols[1][k]) for k in range(beta))
    # a pool is never reused
    pool.zeros, pool.ones = [], []
    return PmtQuery(kp.pk, f, q), kp


def check_query(query: PmtQuery, group, bucket_count: int) -> None:
    if not isinstance(query, PmtQuery) or not isinstance(query.pk, PublicKey):
        raise MalformedQuery("not a query")
    if query.pk.group is not group:
        raise MalformedQuery("query uses a different group")
    u = query.pk.u_point
    if not group.is_element(u) or u == group.identity:
        raise MalformedQuery("public key is not a non-identity group element")
    if len(query.q) != bucket_count:
        raise MalformedQuery("query bucket count does not match the filter")
    if not validate(query.pk, query.f):
        raise MalformedQuery("f is not a ciphertext")
    for pair in query.q:
        if len(pair) != 2 or not (validate(query.pk, pair[0]) and validate(query.pk, pair[1])):
            raise MalformedQuery("query entry is not a ciphertext")


def respond(query: PmtQuery, matrix: Sequence[Sequence[int]], group=None, rng=None,
            shuffle: bool = True) -> PmtResponse:
    """Evaluate the membership test against ``matrix`` (rows = slots, cols = buckets).

    Each output entry is a single multi-scalar multiplication per component:
    sum_k (m*X[i][k]) Q[k][j] + m*f + y*(g, U), the last term being the fresh
    re-randomization.
    """
    group = group or query.group
    rng = rng or _SYSRAND
    beta = len(matrix[0]) if matrix else 0
    check_query(query, group, beta)
    r = group.order
    pk = query.pk
    entries = []
    for j in range(2):
        bases_v = [pair[j].v for pair in query.q] + [query.f.v, group.generator]
        bases_w = [pair[j].w for pair in query.q] + [query.f.w, pk.u_point]
        rows = []
        for xrow in matrix:
            m = rng.randrange(1, r)
            rows.append([m * xv % r for xv in xrow] + [m, rng.randrange(r)])
        vs = group.msm_rows(rows, bases_v)
        ws = group.msm_rows(rows, bases_w)
        entries.extend(Ciphertext(v, w) for v, w in zip(vs, ws))
    if shuffle:
        rng.shuffle(entries)
    return PmtResponse(tuple(entries))


def check_response(kp: KeyPair, resp: PmtResponse, expected: int | None = None) -> None:
    if not isinstance(resp, PmtResponse):
        raise MalformedResponse("not a response")
    if expected is not None and len(resp.entries) != expected:
        raise MalformedResponse(f"expected {expected} entries, got {len(resp.entries)}")
    for c in resp.entries:
        if not validate(kp.pk, c):
            raise MalformedResponse("response entry is not a ciphertext")


def count_zeros(kp: KeyPair, resp: PmtResponse, expected: int | None = None) -> int:
    check_response(kp, resp, expected)
    return sum(zero_test(kp, c) for c in resp.entries)


def interpret(kp: KeyPair, resp: PmtResponse, expected: int | None = None) -> bool:
    """OR of zero tests over all entries; aborts on any invalid entry."""
    return count_zeros(kp, resp, expected) > 0


# ------------------------------------------------------------ adversary


@dataclass
class ExtractionResult:
    queries: int
    recovered: int | None
    resolved: list[int]

    @property
    def success(self) -> bool:
        return self.recovered is not None


def _crafted_query(group, beta: int, tests: tuple[int, int], rng) -> tuple[PmtQuery, KeyPair]:
    """Column j tests 'the stored fingerprint equals tests[j]' in every bucket."""
    r = group.order
    kp = gen(group, rng)
    mf = rng.randrange(1, r)
    scal = [(-mf * pow(t, -1, r)) % r for t in tests]
    q = tuple((encrypt(kp.pk, scal[0], rng), encrypt(kp.pk, scal[1], rng)) for _ in range(beta))
    return PmtQuery(kp.pk, encrypt(kp.pk, mf, rng), q), kp


def extraction_adversary(oracle: Callable[[PmtQuery], PmtResponse], group, bucket_count: int,
                         bucket_capacity: int, fingerprint_space: int, budget: int,
                         shuffled: bool = False, rng=None) -> ExtractionResult:
    """Reference malicious requester against a single-element filter.

    Every query puts the same scalar c_j = -m_f / phi_j in all buckets of
    column j, so with zero-valued free slots row i of column j is zero iff the
    row's bucket sum equals phi_j. That tests two candidate fingerprints per
    query. If the responder shuffles its output a hit only narrows the
    fingerprint to the pair, and one extra query settles which.

    ``resolved`` counts, per response, how many of the 2b congruence tests the
    adversary can attribute to a (row, column) position.
    """
    rng = rng or _SYSRAND
    two_b = 2 * bucket_capacity
    candidates = list(range(1, 2 * fingerprint_space, 2))
    rng.shuffle(candidates)
    resolved: list[int] = []
    queries = 0

    def ask(tests):
        nonlocal queries
        query, kp = _crafted_query(group, bucket_count, tests, rng)
        resp = oracle(query)
        queries += 1
        hits = [zero_test(kp, c) for c in resp.entries]
        if not shuffled:
            resolved.append(two_b)
        else:
            # a shuffled response pins every test only when all agree
            resolved.append(two_b if sum(hits) in (0, len(hits)) else 0)
        return hits

    while candidates and queries < budget:
        a = candidates.pop()
        b = candidates.pop() if candidates else a
        hits = ask((a, b))
        if not any(hits):
            continue
        if not shuffled:
            # unshuffled output lists column 0 rows first
            return ExtractionResult(queries, a if any(hits[:bucket_capacity]) else b, resolved)
        if a == b:
            return ExtractionResult(queries, a, resolved)
        if queries >= budget:
            break
        hits = ask((a, a))
        return ExtractionResult(queries, a if any(hits) else b, resolved)
    return ExtractionResult(queries, None, resolved)


def expected_extraction_queries(fingerprint_space: int, shuffled: bool) -> float:
    """Mean queries of the reference adversary when the fingerprint is uniform on F."""
    pairs = (fingerprint_space + 1) // 2
    return (pairs + 1) / 2 + (1.0 if shuffled else 0.0)
