"""Desk-scale simulator of DRAM access-latency slack under process variation and temperature."""

from .device import (
    STANDARD_TIMINGS,
    TYPICAL_TEMPERATURE,
    WORST_CASE_TEMPERATURE,
    AccessKind,
    CellParameters,
    ChargeState,
    ModelConstants,
    OperatingPoint,
    Outcome,
    TimingSet,
    access_outcome,
)

__version__ = "0.1.0"
