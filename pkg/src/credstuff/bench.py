"""Loopback latency/throughput harness for the PMT deployment."""

from __future__ import annotations

import math
import random
import statistics
import threading
import time
from dataclasses import asdict, dataclass

from .cuckoo import FilterParams
from .detection import AdsVerdict
from .netwire.loopback import LoopbackDeployment

# combined query load estimated for the largest U.S. sites, for context only
INDUSTRY_LOAD_QPS = 660.0
QUALIFYING_SECONDS = 5.0
BENCH_ACCOUNT = "bench@example.com"


@dataclass
class BenchRow:
    ell: int
    responders: int
    bucket_count: int
    queries: int
    median_s: float
    p95_s: float
    throughput_qps: float
    qualifying_qps: float
    timeouts: int

    def as_dict(self) -> dict:
        return asdict(self)


def percentile(xs: list[float], q: float) -> float:
    """Nearest-rank percentile."""
    s = sorted(xs)
    return s[max(0, math.ceil(q * len(s)) - 1)]


def fill(dep: LoopbackDeployment, ah: bytes, ell: int, rng: random.Random) -> None:
    verdict = AdsVerdict(True, True)
    for eng in dep.engines:
        s = eng.suspicious_set(ah)
        for k in range(ell):
            s.collect(rng.getrandbits(256).to_bytes(32, "big"), False, verdict, k)


def run_point(ell: int, responders: int, group, queries: int = 5, duration: float = 0.0,
              concurrency: int = 1, seed: int | None = None, responder_timeout: float = 60.0,
              batch_timeout: float = 120.0) -> BenchRow:
    rng = random.Random(seed)
    params = FilterParams.for_capacity(ell)
    dep = LoopbackDeployment(params, group, responders, rng=rng, responder_timeout=responder_timeout,
                             batch_timeout=batch_timeout, rate=1e9, burst=1e9).start()
    try:
        ah = dep.register_account(BENCH_ACCOUNT)
        fill(dep, ah, ell, rng)
        channel = dep.channel(timeout=batch_timeout + 10)
        probe = rng.getrandbits(256).to_bytes(32, "big")
        lat = []
        timeouts = 0
        for _ in range(queries):
            t0 = time.perf_counter()
            res = channel.query_element(ah, probe)
            lat.append(time.perf_counter() - t0)
            timeouts += res.timeouts
        thr = qual = 0.0
        if duration > 0:
            thr, qual = _closed_loop(channel, ah, probe, duration, concurrency)
        return BenchRow(ell, responders, params.bucket_count, queries, statistics.median(lat),
                        percentile(lat, 0.95), thr, qual, timeouts)
    finally:
        dep.stop()


def _closed_loop(channel, ah: bytes, probe: bytes, duration: float, concurrency: int) -> tuple[float, float]:
    """Each worker keeps one query in flight; a response qualifies if it
    returns within QUALIFYING_SECONDS with no timed-out responder."""
    stop = time.perf_counter() + duration
    counts = [0, 0]
    lock = threading.Lock()

    def worker():
        while time.perf_counter() < stop:
            t0 = time.perf_counter()
            try:
                res = channel.query_element(ah, probe)
                ok = res.timeouts == 0
            except Exception:  # noqa: BLE001 - a failed query just does not qualify
                ok = False
            dt = time.perf_counter() - t0
            with lock:
                counts[0] += 1
                counts[1] += ok and dt <= QUALIFYING_SECONDS
    start = time.perf_counter()
    threads = [threading.Thread(target=worker) for _ in range(concurrency)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    elapsed = time.perf_counter() - start
    return counts[0] / elapsed, counts[1] / elapsed


def run_grid(ells: list[int], responders: list[int], group, **kw) -> list[BenchRow]:
    return [run_point(ell, n, group, **kw) for n in responders for ell in ells]
