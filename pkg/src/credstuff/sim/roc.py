"""ROC sweeps: (FDR, TDR) pairs as the attack width w varies."""

from __future__ import annotations

import csv
import io
import random
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .fdr import greedy_plant, mc_fdr, solve_fdr
from .models import FdrConfig, TdrConfig
from .tdr import mc_tdr, solve_tdr, sweep_once

COLUMNS = ["n", "pwds", "zipf", "has2fa", "fpr_col", "tpr_col", "fpr_cnt", "tpr_cnt", "w",
           "fdr", "tdr", "e_accessed", "e_detected"]

LEGEND_POINTS = ((0.05, 0.61), (0.10, 0.74), (0.20, 0.88))


@dataclass(frozen=True)
class RocBase:
    n: int = 5
    n_pwds: int = 3
    s: float = 1.0
    has2fa: frozenset[int] = field(default_factory=frozenset)
    fpr_cnt: float = 0.30
    tpr_cnt: float = 0.95


# reduced-size analogues of the two attacker baselines
PRESETS = {
    "phishing-baseline": RocBase(fpr_cnt=0.30, tpr_cnt=0.95),
    "researching-baseline": RocBase(fpr_cnt=0.10, tpr_cnt=0.99),
}


@dataclass(frozen=True)
class RocRow:
    n: int
    pwds: int
    zipf: float
    has2fa: int
    fpr_col: float
    tpr_col: float
    fpr_cnt: float
    tpr_cnt: float
    w: int
    fdr: float
    tdr: float | None
    e_accessed: float
    e_detected: float


def roc_sweep(base: RocBase, points: Sequence[tuple[float, float]], ws: Iterable[int],
              mc: bool = False, trials: int = 10_000, rng: random.Random | None = None) -> list[RocRow]:
    """One row per (ADS point, w). Exact solvers unless ``mc`` is set, in which
    case the greedy-plant and sweep-once baselines are simulated instead."""
    rng = rng or random.Random()
    ws = list(ws)
    rows = []
    for fpr_col, tpr_col in points:
        for w in ws:
            fc = FdrConfig(base.n, base.n_pwds, base.s, w, fpr_col, base.fpr_cnt)
            tc = TdrConfig(base.n, base.n_pwds, base.s, w, tpr_col, base.tpr_cnt, base.has2fa)
            if mc:
                fdr = mc_fdr(fc, greedy_plant, trials, rng).mean
                est = mc_tdr(tc, sweep_once, trials, rng)
                ea, ed, tdr = est.accessed.mean, est.detected.mean, est.ratio
            else:
                fdr = solve_fdr(fc).fdr
                sol = solve_tdr(tc)
                ea, ed, tdr = sol.e_accessed, sol.e_detected, sol.tdr
            rows.append(RocRow(base.n, base.n_pwds, base.s, len(base.has2fa), fpr_col, tpr_col,
                               base.fpr_cnt, base.tpr_cnt, w, fdr, tdr, ea, ed))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: Sequence[RocRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        d = asdict(row)
        writer.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def curve(rows: Sequence[RocRow], point: tuple[float, float]) -> list[tuple[float, float]]:
    """(fdr, tdr) pairs for one ADS point, sorted by FDR, undefined TDR dropped."""
    pts = [(r.fdr, r.tdr) for r in rows if (r.fpr_col, r.tpr_col) == point and r.tdr is not None]
    return sorted(pts)


def interpolate(pts: Sequence[tuple[float, float]], x: float) -> float | None:
    """Piecewise-linear TDR at FDR ``x``; None outside the curve's FDR range."""
    if not pts or x < pts[0][0] or x > pts[-1][0]:
        return None
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if x0 <= x <= x1:
            if x1 == x0:
                return max(y0, y1)
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return pts[-1][1]


def dominates(upper: Sequence[tuple[float, float]], lower: Sequence[tuple[float, float]],
              tol: float = 1e-9) -> bool:
    """True if ``upper`` has TDR >= ``lower`` at every FDR where both are defined."""
    xs = sorted({x for x, _ in upper} | {x for x, _ in lower})
    compared = False
    for x in xs:
        a, b = interpolate(upper, x), interpolate(lower, x)
        if a is None or b is None:
            continue
        compared = True
        if a < b - tol:
            return False
    return compared
