"""Token buckets for per-account query limits and challenge escalation."""

from __future__ import annotations

import threading
import time
from typing import Callable


class TokenBucket:
    def __init__(self, rate: float, burst: float, clock: Callable[[], float] = time.monotonic):
        if rate <= 0 or burst <= 0:
            raise ValueError("rate and burst must be positive")
        self.rate = rate
        self.burst = burst
        self.clock = clock
        self.tokens = burst
        self.stamp = clock()

    def _refill(self) -> None:
        now = self.clock()
        self.tokens = min(self.burst, self.tokens + (now - self.stamp) * self.rate)
        self.stamp = now

    def take(self, cost: float = 1.0) -> float:
        """0.0 if granted, else seconds until ``cost`` tokens will be available."""
        self._refill()
        if self.tokens >= cost:
            self.tokens -= cost
            return 0.0
        return (cost - self.tokens) / self.rate


class KeyedLimiter:
    """One bucket per key (account hash), created lazily."""

    def __init__(self, rate: float, burst: float, clock: Callable[[], float] = time.monotonic):
        self.rate = rate
        self.burst = burst
        self.clock = clock
        self._buckets: dict[bytes, TokenBucket] = {}
        self._lock = threading.Lock()

    def take(self, key: bytes, cost: float = 1.0) -> float:
        with self._lock:
            b = self._buckets.get(key)
            if b is None:
                b = self._buckets[key] = TokenBucket(self.rate, self.burst, self.clock)
            return b.take(cost)


PASS, CHALLENGE = "pass", "challenge-required"


class EscalationGate:
    """Signals challenge-required when an account's query rate runs above
    ``rate`` per second for longer than ``burst`` queries allow. Issuing the
    challenge itself is left to ``on_challenge``."""

    def __init__(self, rate: float, burst: float, clock: Callable[[], float] = time.monotonic,
                 on_challenge: Callable[[bytes], None] | None = None):
        self.limiter = KeyedLimiter(rate, burst, clock)
        self.on_challenge = on_challenge

    def check(self, account_hash: bytes) -> str:
        if self.limiter.take(account_hash) == 0.0:
            return PASS
        if self.on_challenge:
            self.on_challenge(account_hash)
        return CHALLENGE
