"""Configs, results and the password model shared by the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable


class StateSpaceTooLarge(RuntimeError):
    pass


MAX_STATES = 10**7


@dataclass(frozen=True)
class PasswordDist:
    probs: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.probs)


def zipf(n_pwds: int, s: float) -> PasswordDist:
    if n_pwds < 1:
        raise ValueError("need at least one password")
    if s < 0:
        raise ValueError("Zipf shape must be >= 0")
    weights = [1.0 / k**s for k in range(1, n_pwds + 1)]
    total = math.fsum(weights)
    return PasswordDist(tuple(wt / total for wt in weights))


def _check_prob(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class FdrConfig:
    n: int
    n_pwds: int
    s: float
    w: int
    fpr_col: float
    fpr_cnt: float

    def __post_init__(self):
        if self.n < 1 or self.w < 1:
            raise ValueError("need n >= 1 and w >= 1")
        _check_prob("fpr_col", self.fpr_col)
        _check_prob("fpr_cnt", self.fpr_cnt)

    @property
    def dist(self) -> PasswordDist:
        return zipf(self.n_pwds, self.s)


@dataclass(frozen=True)
class TdrConfig:
    n: int
    n_pwds: int
    s: float
    w: int
    tpr_col: float
    tpr_cnt: float
    has2fa: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.n < 1 or self.w < 1:
            raise ValueError("need n >= 1 and w >= 1")
        if not set(self.has2fa) <= set(range(1, self.n + 1)):
            raise ValueError("has2fa must be a subset of sites 1..n")
        object.__setattr__(self, "has2fa", frozenset(self.has2fa))
        _check_prob("tpr_col", self.tpr_col)
        _check_prob("tpr_cnt", self.tpr_cnt)

    @property
    def dist(self) -> PasswordDist:
        return zipf(self.n_pwds, self.s)


@dataclass
class MdpSolution:
    """Optimal value of an experiment.

    For FDR ``value`` is the win probability of H. For TDR it is the pair
    (E|accessed|, E|detected|) and ``tdr`` their ratio, None when E|accessed| = 0.
    """

    value: Any
    start_states: int  # distinct abstract states after the initial draw
    policy: Callable | None = field(default=None, repr=False)

    @property
    def fdr(self) -> float:
        return self.value

    @property
    def e_accessed(self) -> float:
        return self.value[0]

    @property
    def e_detected(self) -> float:
        return self.value[1]

    @property
    def tdr(self) -> float | None:
        a, d = self.value
        return d / a if a > 1e-15 else None


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float
    trials: int
    stderr: float

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def __contains__(self, x: float) -> bool:
        return self.low <= x <= self.high


Z95 = 1.959963984540054


def estimate_from(total: float, total_sq: float, trials: int) -> Estimate:
    if trials <= 0:
        raise ValueError("trials must be positive")
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    if trials > 1:
        var *= trials / (trials - 1)
    se = math.sqrt(var / trials)
    return Estimate(mean, Z95 * se, trials, se)
