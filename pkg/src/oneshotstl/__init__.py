"""Streaming seasonal-trend decomposition with constant-time updates."""

from .anomaly import NSigmaStats, detect_stream, nsigma_update
from .banded import (
    BandedSymMatrix,
    LDLFactors,
    NonPositivePivot,
    OnlineFactorState,
    banded_solve,
    forward_substitute,
    online_doolittle_step,
    sdf_factorize,
)
from .batch import (
    Decomposition,
    IrlsWeights,
    build_batch_system,
    build_online_system,
    joint_stl,
    modified_joint_stl,
    tail_block,
)
from .core import (
    Config,
    DecompPoint,
    InvalidConfig,
    NonFiniteInput,
    NotInitialized,
    SolverFailure,
    TimeSeries,
    validate_config,
)
from .decomposer import DecomposerState, OneShotSTL, SeasonalBuffer, evaluate_shift_candidates, initialize, update
from .forecast import forecast_horizon, forecast_step
from .periodicity import NoPeriod, PeriodEstimate, estimate_period, tune_lambda
from .series_io import EmptyInput, OutputRecord, ParseError, parse_series

__all__ = [
    "BandedSymMatrix", "Config", "DecompPoint", "DecomposerState", "Decomposition", "EmptyInput",
    "InvalidConfig", "IrlsWeights", "LDLFactors", "NSigmaStats", "NoPeriod", "NonFiniteInput",
    "NonPositivePivot", "NotInitialized", "OneShotSTL", "OnlineFactorState", "OutputRecord", "ParseError",
    "PeriodEstimate", "SeasonalBuffer", "SolverFailure", "TimeSeries", "banded_solve", "build_batch_system",
    "build_online_system", "detect_stream", "estimate_period", "evaluate_shift_candidates",
    "forecast_horizon", "forecast_step", "forward_substitute", "initialize", "joint_stl", "modified_joint_stl",
    "nsigma_update", "online_doolittle_step", "parse_series", "sdf_factorize", "tail_block", "tune_lambda",
    "update", "validate_config",
]
