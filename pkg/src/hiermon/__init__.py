"""Capacity and latency analysis of hierarchical publish-subscribe monitoring trees."""

from hiermon.loadmodel import (
    DEFAULT_COEFFICIENTS,
    LoadCoefficients,
    hierarchy_loads,
    hierarchy_timings,
)
from hiermon.model import (
    SATURATED,
    ChannelTimings,
    HierarchyConfig,
    LatencyBound,
    channels_at_level,
    machines_total,
    propagation_time,
    propagation_time_recursive,
    staleness_time,
    validate,
)
from hiermon.sim import SimConfig, SimTrace, run

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_COEFFICIENTS",
    "SATURATED",
    "ChannelTimings",
    "HierarchyConfig",
    "LatencyBound",
    "LoadCoefficients",
    "SimConfig",
    "SimTrace",
    "channels_at_level",
    "hierarchy_loads",
    "hierarchy_timings",
    "machines_total",
    "propagation_time",
    "propagation_time_recursive",
    "run",
    "staleness_time",
    "validate",
    "__version__",
]
