"""Escape-time experiments for stochastic volatility models of stock prices."""

from .engine import ParameterError, RngStream, SimConfig, StepConfig
from .escape import (
    DegenerateEnsembleError,
    EscapeEnsemble,
    EscapeSpec,
    InsufficientDataError,
    MetEstimate,
    ReturnThresholds,
    detect_nonmonotonicity,
    mean_escape_time,
    met_sweep,
    return_series_escape_times,
    run_escape_ensemble,
)
from .models import (
    POTENTIAL,
    CubicPotential,
    GarchParams,
    GbmParams,
    HestonParams,
    NlhParams,
    ProcessState,
    barrier_heights,
    potential_gradient,
    potential_value,
    step,
)
from .simulate import ReturnSeries, simulate_cir, simulate_returns, state_path

__all__ = [
    "POTENTIAL", "CubicPotential", "DegenerateEnsembleError", "EscapeEnsemble", "EscapeSpec",
    "GarchParams", "GbmParams", "HestonParams", "InsufficientDataError", "MetEstimate", "NlhParams",
    "ParameterError", "ProcessState", "ReturnSeries", "ReturnThresholds", "RngStream", "SimConfig",
    "StepConfig", "barrier_heights", "detect_nonmonotonicity", "mean_escape_time", "met_sweep",
    "potential_gradient", "potential_value", "return_series_escape_times", "run_escape_ensemble",
    "simulate_cir", "simulate_returns", "state_path", "step",
]
