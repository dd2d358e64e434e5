"""Detection-rate experiments: exact MDP solving for small instances, Monte Carlo beyond."""

from .fdr import FdrState, evaluate_fdr_policy, greedy_plant, make_sequential_recall, mc_fdr, solve_fdr
from .models import (
    Estimate,
    FdrConfig,
    MdpSolution,
    PasswordDist,
    StateSpaceTooLarge,
    TdrConfig,
    zipf,
)
from .roc import LEGEND_POINTS, PRESETS, RocBase, RocRow, roc_sweep, to_csv
from .tdr import TdrState, evaluate_tdr_policy, mc_tdr, non_2fa_first, solve_tdr, sweep_once

__all__ = [
    "Estimate",
    "FdrConfig",
    "FdrState",
    "LEGEND_POINTS",
    "PRESETS",
    "RocBase",
    "RocRow",
    "MdpSolution",
    "PasswordDist",
    "StateSpaceTooLarge",
    "TdrConfig",
    "TdrState",
    "evaluate_fdr_policy",
    "evaluate_tdr_policy",
    "greedy_plant",
    "make_sequential_recall",
    "mc_fdr",
    "mc_tdr",
    "non_2fa_first",
    "roc_sweep",
    "solve_fdr",
    "solve_tdr",
    "sweep_once",
    "to_csv",
    "zipf",
]
