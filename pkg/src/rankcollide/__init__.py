"""Competing Brownian particles: collision criteria and rank-based simulation."""

__version__ = "0.1.0"

from .model import (
    FiniteSystemSpec,
    InfiniteSystemSpec,
    InitFamily,
    RankingPermutation,
    RankedState,
    gaps,
    rank_permutation,
    ranked_values,
    validate_finite_spec,
    validate_infinite_spec,
)
from .conditions import ConditionReport, WindowPair, pi_max
from .simulate import SimConfig, monte_carlo, simulate_infinite_truncated, simulate_path
from .rng import derive_stream
