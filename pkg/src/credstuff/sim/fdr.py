"""False-detection experiment: a forgetful user H against an honest user J.

After the initial chance node (J's password, every site's password and each
site's single collection flag) the game is deterministic: H picks (site,
password) attempts, an incorrect attempt at a flagged site adds that password
to the site's suspicious set, and a correct attempt ends H's play at that
site. H wins if J's password ends up in at least w sets and the counting-phase
flag fires.

The solver runs memoized backward induction over the post-draw states. The
value it carries is the largest number of sets J's password can still be
planted in, which decides the terminal indicator for every w at once.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Optional

from .models import MAX_STATES, FdrConfig, MdpSolution, StateSpaceTooLarge, estimate_from

Action = tuple[int, int]


def legal_actions(state: "FdrState", n_pwds: int) -> Iterator[Action]:
    """Attempts not yet made at sites where the correct password is untried."""
    for i, pw in enumerate(state.pwds):
        if state.tried[i] >> pw & 1:
            continue
        for p in range(n_pwds):
            if not state.tried[i] >> p & 1:
                yield (i, p)


@dataclass(frozen=True)
class FdrState:
    """Fully observed state: J's password, per-site passwords, flags, tried masks."""

    pwd0: int
    pwds: tuple[int, ...]
    flags: tuple[bool, ...]
    tried: tuple[int, ...]

    def done(self, i: int) -> bool:
        return bool(self.tried[i] >> self.pwds[i] & 1)

    def step(self, a: Action) -> "FdrState":
        i, p = a
        if self.done(i) or self.tried[i] >> p & 1:
            raise ValueError(f"illegal attempt {a}")
        tried = list(self.tried)
        tried[i] |= 1 << p
        return FdrState(self.pwd0, self.pwds, self.flags, tuple(tried))

    def planted(self) -> int:
        """Number of sites whose suspicious set holds J's password."""
        return sum(
            1
            for pw, fl, t in zip(self.pwds, self.flags, self.tried)
            if fl and pw != self.pwd0 and t >> self.pwd0 & 1
        )


def abstract(state: FdrState) -> tuple:
    """Canonical post-draw key. Sites are exchangeable, and at an unflagged site
    attempts change nothing, so its tried mask is dropped."""
    sites = tuple(sorted((pw, fl, t if fl else 0) for pw, fl, t in zip(state.pwds, state.flags, state.tried)))
    return (state.pwd0, sites)


def state_bound(n: int, n_pwds: int) -> int:
    per_site = n_pwds * 2**n_pwds + n_pwds
    return n_pwds * math.comb(per_site + n - 1, n)


class _Solver:
    def __init__(self, n_pwds: int):
        self.n_pwds = n_pwds
        self.memo: dict[tuple, int] = {}

    def best(self, key: tuple) -> int:
        v = self.memo.get(key)
        if v is not None:
            return v
        pwd0, sites = key
        cur = 0
        ceiling = 0
        for pw, fl, t in sites:
            if fl and pw != pwd0:
                if t >> pwd0 & 1:
                    cur += 1
                    ceiling += 1
                elif not t >> pw & 1:
                    ceiling += 1
        best = cur
        if best < ceiling:
            prev = None
            for i, site in enumerate(sites):
                pw, fl, t = site
                if not fl or t >> pw & 1 or site == prev:
                    prev = site
                    continue
                prev = site
                for p in range(self.n_pwds):
                    if t >> p & 1:
                        continue
                    nxt = sites[:i] + ((pw, fl, t | 1 << p),) + sites[i + 1:]
                    v = self.best((pwd0, tuple(sorted(nxt))))
                    if v > best:
                        best = v
                        if best == ceiling:
                            break
                if best == ceiling:
                    break
        self.memo[key] = best
        return best


@lru_cache(maxsize=16)
def _solver(n_pwds: int) -> _Solver:
    return _Solver(n_pwds)


def initial_distribution(cfg: FdrConfig) -> Iterator[tuple[float, tuple]]:
    """(probability, abstract state) over J's password and the multiset of site draws."""
    probs = cfg.dist.probs
    options = [(pw, fl) for pw in range(cfg.n_pwds) for fl in (False, True)]
    q = {(pw, fl): probs[pw] * (cfg.fpr_col if fl else 1.0 - cfg.fpr_col) for pw, fl in options}
    for combo in itertools.combinations_with_replacement(options, cfg.n):
        weight = math.factorial(cfg.n)
        prob = 1.0
        for opt, grp in itertools.groupby(combo):
            c = len(list(grp))
            weight //= math.factorial(c)
            prob *= q[opt] ** c
        prob *= weight
        if prob == 0.0:
            continue
        sites = tuple(sorted((pw, fl, 0) for pw, fl in combo))
        for pwd0, p0 in enumerate(probs):
            if p0 > 0.0:
                yield prob * p0, (pwd0, sites)


def solve_fdr(cfg: FdrConfig, max_states: int = MAX_STATES) -> MdpSolution:
    bound = state_bound(cfg.n, cfg.n_pwds)
    if bound > max_states:
        raise StateSpaceTooLarge(f"up to {bound} states exceeds the bound {max_states}; use Monte Carlo")
    solver = _solver(cfg.n_pwds)
    start = list(initial_distribution(cfg))
    win = math.fsum(p for p, key in start if solver.best(key) >= cfg.w)
    value = cfg.fpr_cnt * win

    def policy(state: FdrState) -> Optional[Action]:
        key = abstract(state)
        target = solver.best(key)
        cur = state.planted()
        if cur >= target:
            return None
        for a in legal_actions(state, cfg.n_pwds):
            if solver.best(abstract(state.step(a))) == target:
                return a
        return None

    return MdpSolution(value, len({key for _, key in start}), policy)


# ---------------------------------------------------------------- policies

FdrPolicy = Callable[[FdrState], Optional[Action]]


def greedy_plant(state: FdrState) -> Optional[Action]:
    """Plant J's password at every flagged site where it is wrong."""
    for i, (pw, fl) in enumerate(zip(state.pwds, state.flags)):
        if fl and pw != state.pwd0 and not state.tried[i] >> state.pwd0 & 1:
            return (i, state.pwd0)
    return None


def make_sequential_recall(n_pwds: int) -> FdrPolicy:
    """At each site in turn, try passwords in popularity order until one works."""

    def policy(state: FdrState) -> Optional[Action]:
        for i, pw in enumerate(state.pwds):
            if state.tried[i] >> pw & 1:
                continue
            for p in range(n_pwds):
                if not state.tried[i] >> p & 1:
                    return (i, p)
        return None

    return policy


def _run(state: FdrState, policy: FdrPolicy, n_pwds: int) -> FdrState:
    limit = len(state.pwds) * n_pwds
    for _ in range(limit + 1):
        a = policy(state)
        if a is None:
            return state
        state = state.step(a)
    raise RuntimeError("policy exceeded the attempt horizon")


def evaluate_fdr_policy(cfg: FdrConfig, policy: FdrPolicy) -> float:
    """Exact win probability of a fixed policy, by enumerating every draw."""
    probs = cfg.dist.probs
    total = 0.0
    zero = (0,) * cfg.n
    for pwd0 in range(cfg.n_pwds):
        for pwds in itertools.product(range(cfg.n_pwds), repeat=cfg.n):
            p_pw = probs[pwd0] * math.prod(probs[p] for p in pwds)
            if p_pw == 0.0:
                continue
            for flags in itertools.product((False, True), repeat=cfg.n):
                k = sum(flags)
                p = p_pw * cfg.fpr_col**k * (1 - cfg.fpr_col) ** (cfg.n - k)
                if p == 0.0:
                    continue
                end = _run(FdrState(pwd0, pwds, flags, zero), policy, cfg.n_pwds)
                if end.planted() >= cfg.w:
                    total += p
    return cfg.fpr_cnt * total


def sample_draw(cfg: FdrConfig, rng: random.Random) -> FdrState:
    probs = cfg.dist.probs
    idx = range(cfg.n_pwds)
    pwd0 = rng.choices(idx, probs)[0]
    pwds = tuple(rng.choices(idx, probs, k=cfg.n))
    flags = tuple(rng.random() < cfg.fpr_col for _ in range(cfg.n))
    return FdrState(pwd0, pwds, flags, (0,) * cfg.n)


def mc_fdr(cfg: FdrConfig, policy: FdrPolicy, trials: int, rng: random.Random | None = None):
    """Monte Carlo win rate of ``policy`` with a 95% normal-approximation CI."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    rng = rng or random.Random()
    wins = 0
    for _ in range(trials):
        end = _run(sample_draw(cfg, rng), policy, cfg.n_pwds)
        if end.planted() >= cfg.w and rng.random() < cfg.fpr_cnt:
            wins += 1
    return estimate_from(wins, wins, trials)
