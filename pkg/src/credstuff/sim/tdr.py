"""True-detection experiment: a stuffing attacker C with one leaked password.

C makes at most one attempt per site. Each attempt draws a fresh ADS verdict;
the site adds the leaked password to its suspicious set under SUSP (wrong
password) or SUSP+ (2FA sites, any password). From the (w+1)-th attempt on, a
successful access counts, and it is detected when d_cnt fires and at least w
other sites already hold the password.

C maximises E|accessed| and, among maximisers, minimises E|detected|. Sites
are fully observed (C knows which passwords match and which sites use 2FA).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Optional

from ..detection import ads_joint
from .models import MAX_STATES, MdpSolution, StateSpaceTooLarge, TdrConfig, estimate_from

EPS = 1e-12

UNTRIED, TRIED, IN_SET = 0, 1, 2


@dataclass(frozen=True)
class TdrState:
    """Per-site match/2FA flags, attempt status, and the attempt count so far."""

    match: tuple[bool, ...]
    tfa: tuple[bool, ...]
    status: tuple[int, ...]

    @property
    def attempts(self) -> int:
        return sum(s != UNTRIED for s in self.status)

    def untried(self) -> list[int]:
        return [i for i, s in enumerate(self.status) if s == UNTRIED]

    def in_set(self) -> int:
        return sum(s == IN_SET for s in self.status)


def outcomes(tpr_col: float, tpr_cnt: float) -> list[tuple[float, bool, bool]]:
    return [(p, v.d_col, v.d_cnt) for v, p in ads_joint(tpr_col, tpr_cnt).items() if p > 0.0]


def attempt_result(match: bool, tfa: bool, l: int, others_in_set: int, w: int,
                   d_col: bool, d_cnt: bool) -> tuple[int, int, bool]:
    """(accessed, detected, added-to-set) for the l-th attempt (1-based)."""
    added = d_col and (not match or tfa)
    accessed = l > w and match and not (d_col and tfa)
    detected = accessed and d_cnt and others_in_set >= w
    return int(accessed), int(detected), added


def better(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """Lexicographic: more accesses first, then fewer detections."""
    if a[0] > b[0] + EPS:
        return True
    if a[0] < b[0] - EPS:
        return False
    return a[1] < b[1] - EPS


def state_bound(n: int) -> int:
    return math.comb(12 + n - 1, n)


class _Solver:
    def __init__(self, w: int, tpr_col: float, tpr_cnt: float):
        self.w = w
        self.outcomes = outcomes(tpr_col, tpr_cnt)
        self.memo: dict[tuple, tuple[float, float]] = {}

    def action_value(self, key: tuple, i: int) -> tuple[float, float]:
        match, tfa, _ = key[i]
        l = sum(st != UNTRIED for _, _, st in key) + 1
        others = sum(st == IN_SET for _, _, st in key)
        ea = ed = 0.0
        for p, col, cnt in self.outcomes:
            acc, det, added = attempt_result(match, tfa, l, others, self.w, col, cnt)
            nxt = key[:i] + ((match, tfa, IN_SET if added else TRIED),) + key[i + 1:]
            va, vd = self.value(tuple(sorted(nxt)))
            ea += p * (acc + va)
            ed += p * (det + vd)
        return ea, ed

    def value(self, key: tuple) -> tuple[float, float]:
        v = self.memo.get(key)
        if v is not None:
            return v
        best = (0.0, 0.0)
        prev = None
        for i, site in enumerate(key):
            if site[2] != UNTRIED or site == prev:
                continue
            prev = site
            cand = self.action_value(key, i)
            if better(cand, best):
                best = cand
        self.memo[key] = best
        return best


def abstract(state: TdrState) -> tuple:
    return tuple(sorted(zip(state.match, state.tfa, state.status)))


def initial_distribution(cfg: TdrConfig) -> Iterator[tuple[float, tuple]]:
    """(probability, abstract state) over the leaked password and which sites it opens."""
    h = len(cfg.has2fa)
    rest = cfg.n - h
    for pk in cfg.dist.probs:
        for j1 in range(h + 1):
            b1 = math.comb(h, j1) * pk**j1 * (1 - pk) ** (h - j1)
            for j2 in range(rest + 1):
                b2 = math.comb(rest, j2) * pk**j2 * (1 - pk) ** (rest - j2)
                prob = pk * b1 * b2
                if prob == 0.0:
                    continue
                sites = (
                    [(True, True, UNTRIED)] * j1
                    + [(False, True, UNTRIED)] * (h - j1)
                    + [(True, False, UNTRIED)] * j2
                    + [(False, False, UNTRIED)] * (rest - j2)
                )
                yield prob, tuple(sorted(sites))


@lru_cache(maxsize=256)
def _solver(w: int, tpr_col: float, tpr_cnt: float) -> _Solver:
    return _Solver(w, tpr_col, tpr_cnt)


def solve_tdr(cfg: TdrConfig, max_states: int = MAX_STATES) -> MdpSolution:
    bound = state_bound(cfg.n)
    if bound > max_states:
        raise StateSpaceTooLarge(f"up to {bound} states exceeds the bound {max_states}; use Monte Carlo")
    # the post-draw game depends only on w and the ADS rates
    solver = _solver(cfg.w, cfg.tpr_col, cfg.tpr_cnt)
    ea = ed = 0.0
    starts = set()
    for p, key in initial_distribution(cfg):
        starts.add(key)
        va, vd = solver.value(key)
        ea += p * va
        ed += p * vd

    def policy(state: TdrState) -> Optional[int]:
        key = abstract(state)
        target = solver.value(key)
        if not better(target, (0.0, 0.0)):
            return None
        for i in state.untried():
            j = key.index((state.match[i], state.tfa[i], UNTRIED))
            cand = solver.action_value(key, j)
            if not better(target, cand) and not better(cand, target):
                return i
        return None

    return MdpSolution((ea, ed), len(starts), policy)


# ---------------------------------------------------------------- policies

TdrPolicy = Callable[[TdrState], Optional[int]]


def sweep_once(state: TdrState) -> Optional[int]:
    """Attempt every site once, in index order."""
    untried = state.untried()
    return untried[0] if untried else None


def non_2fa_first(state: TdrState) -> Optional[int]:
    """Attempt sites without 2FA before sites with it."""
    untried = state.untried()
    if not untried:
        return None
    return min(untried, key=lambda i: (state.tfa[i], i))


def _start(cfg: TdrConfig, match: tuple[bool, ...]) -> TdrState:
    tfa = tuple(i + 1 in cfg.has2fa for i in range(cfg.n))
    return TdrState(match, tfa, (UNTRIED,) * cfg.n)


def _apply(state: TdrState, i: int, w: int, col: bool, cnt: bool) -> tuple[TdrState, int, int]:
    if state.status[i] != UNTRIED:
        raise ValueError(f"site {i} already attempted")
    acc, det, added = attempt_result(state.match[i], state.tfa[i], state.attempts + 1,
                                     state.in_set(), w, col, cnt)
    status = list(state.status)
    status[i] = IN_SET if added else TRIED
    return TdrState(state.match, state.tfa, tuple(status)), acc, det


def evaluate_tdr_policy(cfg: TdrConfig, policy: TdrPolicy) -> tuple[float, float]:
    """Exact (E|accessed|, E|detected|) of a deterministic policy."""
    outs = outcomes(cfg.tpr_col, cfg.tpr_cnt)

    def rec(state: TdrState) -> tuple[float, float]:
        i = policy(state)
        if i is None:
            return 0.0, 0.0
        ea = ed = 0.0
        for p, col, cnt in outs:
            nxt, acc, det = _apply(state, i, cfg.w, col, cnt)
            va, vd = rec(nxt)
            ea += p * (acc + va)
            ed += p * (det + vd)
        return ea, ed

    ea = ed = 0.0
    for pk in cfg.dist.probs:
        for bits in range(1 << cfg.n):
            match = tuple(bool(bits >> i & 1) for i in range(cfg.n))
            j = sum(match)
            prob = pk * pk**j * (1 - pk) ** (cfg.n - j)
            if prob == 0.0:
                continue
            va, vd = rec(_start(cfg, match))
            ea += prob * va
            ed += prob * vd
    return ea, ed


@dataclass(frozen=True)
class TdrEstimate:
    accessed: object
    detected: object
    ratio: float | None
    ratio_half_width: float | None


def mc_tdr(cfg: TdrConfig, policy: TdrPolicy, trials: int, rng: random.Random | None = None) -> TdrEstimate:
    """Monte Carlo E|accessed|, E|detected| and their ratio (delta-method CI)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    rng = rng or random.Random()
    probs = cfg.dist.probs
    outs = outcomes(cfg.tpr_col, cfg.tpr_cnt)
    weights = [p for p, _, _ in outs]
    sa = sa2 = sd = sd2 = sad = 0.0
    for _ in range(trials):
        leaked = rng.choices(range(cfg.n_pwds), probs)[0]
        match = tuple(rng.choices(range(cfg.n_pwds), probs)[0] == leaked for _ in range(cfg.n))
        state = _start(cfg, match)
        a = d = 0
        while (i := policy(state)) is not None:
            _, col, cnt = rng.choices(outs, weights)[0]
            state, acc, det = _apply(state, i, cfg.w, col, cnt)
            a += acc
            d += det
        sa += a
        sa2 += a * a
        sd += d
        sd2 += d * d
        sad += a * d
    acc_est = estimate_from(sa, sa2, trials)
    det_est = estimate_from(sd, sd2, trials)
    if acc_est.mean <= 0:
        return TdrEstimate(acc_est, det_est, None, None)
    ratio = det_est.mean / acc_est.mean
    cov = (sad / trials - acc_est.mean * det_est.mean) / trials
    var = (det_est.stderr**2 - 2 * ratio * cov + ratio**2 * acc_est.stderr**2) / acc_est.mean**2
    return TdrEstimate(acc_est, det_est, ratio, 1.959963984540054 * math.sqrt(max(var, 0.0)))
