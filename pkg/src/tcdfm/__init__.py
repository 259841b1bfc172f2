"""Trend-cycle dynamic factor model with stochastic volatility."""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConfigError,
    CycleParams,
    DataPanel,
    LoadingSet,
    ModelConfig,
    ParameterDraw,
    make_truth,
    simulate_dgp,
    validate_config,
)
from .sampler import ChainOutput, SamplerError, gibbs_sweep, initial_draw, run_chain, run_restarts  # noqa: E402
from .analysis import gap_summary, historical_decomposition, irf_gap  # noqa: E402
from .benchmarks import BenchmarkModelSpec, hamilton_filter, hp_filter  # noqa: E402
from .forecast import EvalTable, compute_scores, recursive_evaluation, simulate_predictive  # noqa: E402
from .shrinkage import sample_gig  # noqa: E402

__all__ = [
    "ConfigError",
    "CycleParams",
    "DataPanel",
    "LoadingSet",
    "ModelConfig",
    "ParameterDraw",
    "make_truth",
    "simulate_dgp",
    "validate_config",
    "ChainOutput",
    "SamplerError",
    "gibbs_sweep",
    "initial_draw",
    "run_chain",
    "run_restarts",
    "gap_summary",
    "historical_decomposition",
    "irf_gap",
    "BenchmarkModelSpec",
    "hamilton_filter",
    "hp_filter",
    "EvalTable",
    "compute_scores",
    "recursive_evaluation",
    "simulate_predictive",
    "sample_gig",
]
