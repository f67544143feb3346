"""Exact and simulated success probabilities for telling two population-size
histories apart from coalescent times."""

__version__ = "0.1.0"

from .demography import (
    BottleneckPair,
    IdenticalHypotheses,
    RateMassExhausted,
    ScaledPair,
    Scenario,
    Segment,
    Trajectory,
    UnitScale,
    cum_rate,
    delta,
    eval_size,
    inv_cum_rate,
    load_scenario,
)
from .exact import (
    CorrectProb,
    Method,
    WstarConfig,
    hellinger_upper_bound,
    p_correct_multi_locus,
    p_correct_n3,
    p_correct_scaled_multi,
    p_correct_scaled_single,
    p_correct_single_pair,
    scaled_bound_kim,
    tv_distance_numeric,
)
from .montecarlo import MCConfig, Model, RiskQuery, bayes_risk_conjugate, estimate_p_correct
from .simulate import RngSpec, Variant

__all__ = [
    "BottleneckPair", "CorrectProb", "IdenticalHypotheses", "MCConfig", "Method", "Model",
    "RateMassExhausted", "RiskQuery", "RngSpec", "ScaledPair", "Scenario", "Segment",
    "Trajectory", "UnitScale", "Variant", "WstarConfig", "bayes_risk_conjugate", "cum_rate",
    "delta", "estimate_p_correct", "eval_size", "hellinger_upper_bound", "inv_cum_rate",
    "load_scenario", "p_correct_multi_locus", "p_correct_n3", "p_correct_scaled_multi",
    "p_correct_scaled_single", "p_correct_single_pair", "scaled_bound_kim",
    "tv_distance_numeric",
]
