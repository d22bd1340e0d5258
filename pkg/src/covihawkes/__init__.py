"""Discrete-time Hawkes forecasting of daily case counts with a learned,
mobility-driven reproduction number."""

from .data_model import Level, ModelConfig, RegionId, RegionRecord, cumulative_infected
from .hawkes_core import discount, intensity, poisson_nll
from .trainer import HawkesParams, TrainReport, fit, gradient, total_nll

__all__ = [
    "HawkesParams",
    "Level",
    "ModelConfig",
    "RegionId",
    "RegionRecord",
    "TrainReport",
    "cumulative_infected",
    "discount",
    "fit",
    "gradient",
    "intensity",
    "poisson_nll",
    "total_nll",
]

__version__ = "0.1.0"
