"""Per-account suspicious-password sets and the two-phase detection flow.

Collecting phase: an abnormal login attempt (d_col) adds the salted password
element to the account's suspicious set (SUSP: only wrong passwords; SUSP+:
every abnormal attempt, removed again if a second factor succeeds).

Counting phase: a correct login flagged by d_cnt asks every other registered
site whether the element is in its set and reports stuffing when at least w
of them answer yes.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import json
import logging
import math
import secrets
import threading
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .cuckoo import CuckooFilter, FilterFull, FilterParams, NotFound

log = logging.getLogger(__name__)
_SYSRAND = secrets.SystemRandom()

DAY = 86400


class UnknownPending(KeyError):
    pass


class DirectoryUnavailable(RuntimeError):
    pass


class NoResponders(LookupError):
    pass


class Policy(str, enum.Enum):
    SUSP = "susp"
    SUSP_PLUS = "susp-plus"


# ---------------------------------------------------------------- identifiers


def canonical_account(account: str) -> str:
    return account.strip().lower()


@dataclass(frozen=True)
class AccountSalt:
    account: str
    salt: bytes


def account_salt(account: str, deployment_key: bytes) -> AccountSalt:
    a = canonical_account(account)
    return AccountSalt(a, hmac.new(deployment_key, b"salt\x00" + a.encode(), hashlib.sha256).digest())


def account_hash(account: str, deployment_key: bytes) -> bytes:
    """32-byte account identifier shown to the directory."""
    a = canonical_account(account)
    return hmac.new(deployment_key, b"acct\x00" + a.encode(), hashlib.sha256).digest()


def canonical_password(password: str, lower_first: bool = False) -> str:
    if lower_first and password:
        return password[0].lower() + password[1:]
    return password


@dataclass(frozen=True)
class SlowHash:
    """scrypt with fixed public cost parameters."""

    n: int = 1 << 14
    r: int = 8
    p: int = 1

    def __call__(self, salt: bytes, data: bytes) -> bytes:
        return hashlib.scrypt(data, salt=salt, n=self.n, r=self.r, p=self.p,
                              maxmem=128 * self.n * self.r * self.p + (1 << 20), dklen=32)


DEFAULT_SLOW_HASH = SlowHash()
FAST_SLOW_HASH = SlowHash(n=1 << 8, r=1, p=1)


def password_element(salt: AccountSalt, password: str, lower_first: bool = False,
                     slow_hash: SlowHash = DEFAULT_SLOW_HASH) -> bytes:
    return slow_hash(salt.salt, canonical_password(password, lower_first).encode())


# ---------------------------------------------------------------- ADS model


@dataclass(frozen=True)
class AdsVerdict:
    d_col: bool
    d_cnt: bool


def ads_joint(rho_col: float, rho_cnt: float) -> dict[AdsVerdict, float]:
    """Joint law of (d_col, d_cnt): the less likely flag implies the more likely one."""
    for rho in (rho_col, rho_cnt):
        if not 0.0 <= rho <= 1.0:
            raise ValueError("ADS rates must lie in [0, 1]")
    hi, lo = max(rho_col, rho_cnt), min(rho_col, rho_cnt)
    cnt_is_hi = rho_cnt >= rho_col
    both = lo
    only_hi = hi - lo
    out = {
        AdsVerdict(True, True): both,
        AdsVerdict(False, True) if cnt_is_hi else AdsVerdict(True, False): only_hi,
        AdsVerdict(True, False) if cnt_is_hi else AdsVerdict(False, True): 0.0,
        AdsVerdict(False, False): 1.0 - hi,
    }
    return out


def ads_sample(rho_col: float, rho_cnt: float, rng=None) -> AdsVerdict:
    rng = rng or _SYSRAND
    joint = ads_joint(rho_col, rho_cnt)
    u = rng.random()
    acc = 0.0
    for verdict, prob in joint.items():
        acc += prob
        if u < acc:
            return verdict
    return AdsVerdict(False, False)


# ---------------------------------------------------------------- suspicious sets


class SuspiciousSet:
    """S_a backed by a cuckoo filter, with last-use expiry and SUSP+ pending flags.

    Timestamps are integer seconds and treated as nondecreasing; an older
    ``now`` is clamped to the latest one seen.
    """

    def __init__(self, account_hash: bytes, filt: CuckooFilter, policy: Policy = Policy.SUSP,
                 expiration: float = 30 * DAY):
        self.account_hash = account_hash
        self.filter = filt
        self.policy = Policy(policy)
        self.expiration = expiration
        self.last_use: OrderedDict[bytes, int] = OrderedDict()
        self.pending: dict[bytes, bool] = {}
        self.lock = threading.RLock()
        self._clock = -math.inf

    def __len__(self) -> int:
        return len(self.last_use)

    def __contains__(self, e: bytes) -> bool:
        return e in self.last_use

    def _tick(self, now: float) -> float:
        self._clock = max(self._clock, now)
        return self._clock

    def _add(self, e: bytes, now: int) -> bool:
        if e in self.last_use:
            return False
        try:
            self.filter.insert(e, int(now))
        except FilterFull:
            # make room by dropping the least recently used entry
            if not self.last_use:
                raise
            oldest = next(iter(self.last_use))
            log.warning("suspicious set full; evicting oldest entry")
            self._remove(oldest)
            self.filter.insert(e, int(now))
        self.last_use[e] = now
        return True

    def _remove(self, e: bytes) -> None:
        del self.last_use[e]
        self.pending.pop(e, None)
        try:
            self.filter.delete(e)
        except NotFound:
            log.error("suspicious set and filter disagree")

    def collect(self, e: bytes, correct: bool, verdict: AdsVerdict, now: float) -> bool:
        """Apply the collecting-phase rule. Returns True if ``e`` was newly added."""
        with self.lock:
            now = self._tick(now)
            self.expire(now)
            if e in self.last_use:
                self.last_use[e] = now
                self.last_use.move_to_end(e)
            if not verdict.d_col:
                return False
            if self.policy is Policy.SUSP:
                return False if correct else self._add(e, now)
            added = self._add(e, now)
            if correct:
                self.pending[e] = True
            return added

    def second_factor_result(self, e: bytes, passed: bool) -> None:
        with self.lock:
            if not self.pending.get(e):
                raise UnknownPending(e)
            del self.pending[e]
            if passed and e in self.last_use:
                self._remove(e)

    def expire(self, now: float, expiration: float | None = None) -> int:
        exp = self.expiration if expiration is None else expiration
        removed = 0
        with self.lock:
            now = self._tick(now)
            while self.last_use:
                e, ts = next(iter(self.last_use.items()))
                if now - ts < exp:
                    break
                self._remove(e)
                removed += 1
        return removed

    def snapshot(self) -> list[list[int]]:
        """Matrix copy taken under the set lock, so completed additions are visible."""
        with self.lock:
            return self.filter.snapshot()

    def to_record(self) -> dict:
        with self.lock:
            return {
                "account_hash": self.account_hash.hex(),
                "policy": self.policy.value,
                "expiration": self.expiration,
                "last_use": [[e.hex(), ts] for e, ts in self.last_use.items()],
                "pending": sorted(e.hex() for e in self.pending),
            }

    def to_bytes(self) -> tuple[bytes, bytes]:
        """(filter snapshot, JSON sidecar)."""
        with self.lock:
            return self.filter.to_bytes(), json.dumps(self.to_record()).encode()

    @classmethod
    def from_bytes(cls, filter_bytes: bytes, sidecar: bytes, params: FilterParams | None = None,
                   rng=None) -> "SuspiciousSet":
        rec = json.loads(sidecar)
        kw = {"version": params.version, "key_seed": params.key_seed} if params else {}
        filt = CuckooFilter.from_bytes(filter_bytes, rng=rng, **kw)
        s = cls(bytes.fromhex(rec["account_hash"]), filt, Policy(rec["policy"]), rec["expiration"])
        for e_hex, ts in rec["last_use"]:
            s.last_use[bytes.fromhex(e_hex)] = ts
            s._clock = max(s._clock, ts)
        s.pending = {bytes.fromhex(e): True for e in rec["pending"]}
        return s


class FailureLimiter:
    """Sliding-window cap on failed logins per account."""

    def __init__(self, max_failures: int = 100, window: float = 30 * DAY):
        self.max_failures = max_failures
        self.window = window
        self._times: deque[float] = deque()

    def _prune(self, now: float) -> None:
        while self._times and now - self._times[0] >= self.window:
            self._times.popleft()

    def allow(self, now: float) -> bool:
        self._prune(now)
        return len(self._times) < self.max_failures

    def record_failure(self, now: float) -> None:
        self._times.append(now)


# ---------------------------------------------------------------- counting phase


@dataclass(frozen=True)
class CountingDecision:
    queried: int
    matches: int
    w: int
    detected: bool
    timeouts: int = 0


class QueryChannel(Protocol):
    def query_element(self, account_hash: bytes, e: bytes) -> list[bool]:
        """One PMT result per responder. Raises DirectoryUnavailable or NoResponders."""


def counting_phase(account_hash: bytes, e: bytes, correct: bool, verdict: AdsVerdict,
                   channel: QueryChannel, w: int) -> CountingDecision:
    if not (verdict.d_cnt and correct):
        return CountingDecision(0, 0, w, False)
    try:
        results = channel.query_element(account_hash, e)
    except (DirectoryUnavailable, NoResponders):
        raise
    except OSError as exc:
        raise DirectoryUnavailable(str(exc)) from exc
    timeouts = getattr(results, "timeouts", 0)
    m = sum(bool(r) for r in results)
    return CountingDecision(len(results), m, w, m >= w, timeouts)


@dataclass
class LoginReport:
    account: str
    rejected: bool = False
    collected: bool = False
    decision: CountingDecision | None = None
    events: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = self.decision
        return {
            "account": self.account,
            "rejected": self.rejected,
            "collected": self.collected,
            "queried": d.queried if d else 0,
            "matches": d.matches if d else 0,
            "w": d.w if d else None,
            "detected": d.detected if d else False,
            "timeouts": d.timeouts if d else 0,
            "events": self.events,
        }


class DetectionEngine:
    """One site's view: suspicious sets for its accounts plus the login flow."""

    def __init__(self, deployment_key: bytes, params: FilterParams, order: int,
                 policy: Policy = Policy.SUSP, expiration: float = 30 * DAY, w: int = 2,
                 channel: QueryChannel | None = None, slow_hash: SlowHash = DEFAULT_SLOW_HASH,
                 lower_first: bool = False, max_failures: int | None = 100,
                 fail_open: bool = True, hardening=None, rng=None,
                 on_event: Callable[[dict], None] | None = None):
        from .pmt import HARDENED

        self.deployment_key = deployment_key
        self.params = params
        self.order = order
        self.policy = Policy(policy)
        self.expiration = expiration
        self.w = w
        self.channel = channel
        self.slow_hash = slow_hash
        self.lower_first = lower_first
        self.max_failures = max_failures
        self.fail_open = fail_open
        self.hardening = hardening or HARDENED
        self.rng = rng or _SYSRAND
        self.on_event = on_event
        self.sets: dict[bytes, SuspiciousSet] = {}
        self.limiters: dict[bytes, FailureLimiter] = {}
        self._lock = threading.Lock()

    def account_hash(self, account: str) -> bytes:
        return account_hash(account, self.deployment_key)

    def element(self, account: str, password: str) -> bytes:
        return password_element(account_salt(account, self.deployment_key), password,
                                self.lower_first, self.slow_hash)

    def suspicious_set(self, ah: bytes) -> SuspiciousSet:
        with self._lock:
            s = self.sets.get(ah)
            if s is None:
                filt = CuckooFilter(self.params, self.order, self.params.hash_key_for(ah), self.rng,
                                    self.hardening.random_free_slots)
                s = self.sets[ah] = SuspiciousSet(ah, filt, self.policy, self.expiration)
            return s

    def _emit(self, report: LoginReport, kind: str, **data) -> None:
        ev = {"event": kind, **data}
        report.events.append(ev)
        if self.on_event:
            self.on_event(ev)

    def login(self, account: str, e: bytes, correct: bool, verdict: AdsVerdict, now: float) -> LoginReport:
        """Run both phases for one attempt carrying password element ``e``."""
        ah = self.account_hash(account)
        report = LoginReport(canonical_account(account))
        if self.max_failures is not None:
            lim = self.limiters.setdefault(ah, FailureLimiter(self.max_failures, self.expiration))
            if not lim.allow(now):
                report.rejected = True
                self._emit(report, "rate_limited")
                return report
            if not correct:
                lim.record_failure(now)
        s = self.suspicious_set(ah)
        report.collected = s.collect(e, correct, verdict, now)
        if not (verdict.d_cnt and correct):
            report.decision = CountingDecision(0, 0, self.w, False)
            return report
        try:
            if self.channel is None:
                raise DirectoryUnavailable("no query channel configured")
            report.decision = counting_phase(ah, e, correct, verdict, self.channel, self.w)
        except NoResponders:
            report.decision = CountingDecision(0, 0, self.w, False)
            self._emit(report, "no_responders")
            return report
        except DirectoryUnavailable as exc:
            if not self.fail_open:
                raise
            self._emit(report, "directory_unavailable", detail=str(exc), policy="fail-open")
            return report
        if report.decision.detected:
            self._emit(report, "stuffing_detected", matches=report.decision.matches, w=self.w)
        return report

    def serve_query(self, account_hash: bytes, query, group):
        """Answer a PMT query against the account's current set.

        The snapshot is taken under the set lock, so it never misses an
        addition whose collecting phase already finished.
        """
        from .pmt import respond

        s = self.sets.get(account_hash)
        if s is None:
            raise NoResponders(account_hash.hex())
        with s.lock:
            matrix = s.snapshot()
            if self.hardening.permute_columns:
                s.filter.permute_columns()
        return respond(query, matrix, group, self.rng, self.hardening.shuffle_response)

    def second_factor_result(self, account: str, e: bytes, passed: bool) -> None:
        self.suspicious_set(self.account_hash(account)).second_factor_result(e, passed)

    def expire_all(self, now: float) -> int:
        with self._lock:
            sets = list(self.sets.values())
        return sum(s.expire(now) for s in sets)


class LocalChannel:
    """In-process query channel: one PMT query answered by every responder engine."""

    def __init__(self, responders: Sequence[DetectionEngine], group, rng=None):
        self.responders = list(responders)
        self.group = group
        self.rng = rng

    def query_element(self, account_hash: bytes, e: bytes) -> list[bool]:
        from .pmt import build_query, interpret

        active = [r for r in self.responders if account_hash in r.sets]
        if not active:
            raise NoResponders(account_hash.hex())
        params = active[0].params
        hasher = params.hasher(params.hash_key_for(account_hash))
        query, kp = build_query(e, hasher, self.group, rng=self.rng)
        expected = 2 * params.bucket_capacity
        return [interpret(kp, r.serve_query(account_hash, query, self.group), expected) for r in active]
