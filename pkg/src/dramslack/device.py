"""Analytic charge/latency model of a single DRAM cell.

A cell is described by three process-variation axes (capacity, fill speed,
leakage). An access is decomposed into sequential phases:

    leak -> sense -> restore -> (leak until next access) -> precharge

Every phase is a closed-form exponential. The functions here are the scalar
reference implementation; :mod:`dramslack.kernels` evaluates the same
formulas over arrays of cells.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional


class AccessKind(str, enum.Enum):
    READ = "read"
    WRITE = "write"


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    ERROR = "error"


UNSENSABLE = math.inf
"""Returned by :func:`required_sense_time` when the stored charge is below the floor."""


@dataclass(frozen=True)
class CellParameters:
    """Electrical character of one cell.

    charge_capacity is relative to a nominal cell (1.0). fill_time_constant is
    in ns, leakage_time_constant_ref in ms at the model's reference temperature.
    """

    charge_capacity: float
    fill_time_constant: float
    leakage_time_constant_ref: float

    def __post_init__(self):
        if not (0.0 < self.charge_capacity <= 1.0):
            raise ValueError(f"charge_capacity must be in (0, 1], got {self.charge_capacity}")
        if not self.fill_time_constant > 0.0:
            raise ValueError("fill_time_constant must be positive")
        if not self.leakage_time_constant_ref > 0.0:
            raise ValueError("leakage_time_constant_ref must be positive")

    def dominates(self, other: "CellParameters") -> bool:
        """True if this cell is at least as good as ``other`` on every axis."""
        return (
            self.charge_capacity >= other.charge_capacity
            and self.fill_time_constant <= other.fill_time_constant
            and self.leakage_time_constant_ref >= other.leakage_time_constant_ref
        )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.charge_capacity, self.fill_time_constant, self.leakage_time_constant_ref)


@dataclass(frozen=True)
class TimingSet:
    """tRCD/tRAS/tWR/tRP in ns plus the refresh interval in ms."""

    t_rcd: float
    t_ras: float
    t_wr: float
    t_rp: float
    refresh_interval: float = 64.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0.0:
                raise ValueError(f"{f.name} must be positive")
        if self.t_ras < self.t_rcd:
            raise ValueError("t_ras must be >= t_rcd")

    def read_latency_sum(self) -> float:
        return self.t_rcd + self.t_ras + self.t_rp

    def write_latency_sum(self) -> float:
        return self.t_rcd + self.t_wr + self.t_rp

    def latency_sum(self, kind: AccessKind) -> float:
        if AccessKind(kind) is AccessKind.READ:
            return self.read_latency_sum()
        return self.write_latency_sum()

    def dominates(self, other: "TimingSet") -> bool:
        """Every timing field >= other's and refresh interval <= other's."""
        return (
            self.t_rcd >= other.t_rcd
            and self.t_ras >= other.t_ras
            and self.t_wr >= other.t_wr
            and self.t_rp >= other.t_rp
            and self.refresh_interval <= other.refresh_interval
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TimingSet":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls) if f.name in d})


STANDARD_TIMINGS = TimingSet(t_rcd=13.75, t_ras=35.0, t_wr=15.0, t_rp=13.75, refresh_interval=64.0)
"""DDR3-1600 class values."""


@dataclass(frozen=True)
class OperatingPoint:
    temperature: float

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 100.0):
            raise ValueError(f"temperature must be in [0, 100] C, got {self.temperature}")


WORST_CASE_TEMPERATURE = 85.0
TYPICAL_TEMPERATURE = 55.0


@dataclass(frozen=True)
class ChargeState:
    """Fraction of the cell's own capacity currently stored."""

    charge: float

    def __post_init__(self):
        if not (0.0 <= self.charge <= 1.0):
            raise ValueError(f"charge must be in [0, 1], got {self.charge}")


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class ModelConstants:
    """Constants of the analytic model.

    The defaults are the output of :mod:`dramslack.calibration`; change them
    only together with the calibration cells in
    :class:`dramslack.population.PopulationSpec`.
    """

    min_correct_charge: float = 0.0288023
    sense_base_time: float = 4.42228
    precharge_base_time: float = 17.3758
    temperature_doubling_interval: float = 127.356
    reference_temperature: float = 85.0
    noise_sigma: float = 0.005
    # sensing slows as fill_time_constant / nominal_fill_time_constant
    nominal_fill_time_constant: float = 100.0
    # exponent of the sense-time divergence at the charge floor
    sense_exponent: float = 0.00531084
    # write driver time constant relative to the cell's fill time constant
    write_drive_ratio: float = 0.792113
    # fraction of the sensed charge a read starts restoring from (writes start at 0)
    read_restore_start: float = 0.0
    # headroom at which the precharge time bottoms out at half the base time
    precharge_saturation: float = 0.0750324
    nominal_leakage_time_constant: float = 150.0

    def __post_init__(self):
        if not (0.0 < self.min_correct_charge < 1.0):
            raise ValueError("min_correct_charge must lie strictly between 0 and 1")
        for name in (
            "sense_base_time",
            "precharge_base_time",
            "temperature_doubling_interval",
            "nominal_fill_time_constant",
            "sense_exponent",
            "write_drive_ratio",
            "nominal_leakage_time_constant",
        ):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.read_restore_start < 1.0):
            raise ValueError("read_restore_start must be in [0, 1)")
        if not (0.0 < self.precharge_saturation <= 1.0):
            raise ValueError("precharge_saturation must be in (0, 1]")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")

    def without_noise(self) -> "ModelConstants":
        return replace(self, noise_sigma=0.0)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConstants":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls) if f.name in d})


def leakage_time_constant(cell: CellParameters, op: OperatingPoint, constants: ModelConstants) -> float:
    """Retention time constant at ``op`` in ms; halves every doubling interval."""
    dt = op.temperature - constants.reference_temperature
    return cell.leakage_time_constant_ref * 2.0 ** (-dt / constants.temperature_doubling_interval)


def leak(
    state: ChargeState,
    cell: CellParameters,
    elapsed: float,
    op: OperatingPoint,
    constants: ModelConstants,
) -> ChargeState:
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    tau = leakage_time_constant(cell, op, constants)
    return ChargeState(state.charge * math.exp(-elapsed / tau))


def restore(state: ChargeState, cell: CellParameters, duration: float) -> ChargeState:
    if duration < 0:
        raise ValueError("duration must be >= 0")
    remaining = (1.0 - state.charge) * math.exp(-duration / cell.fill_time_constant)
    return ChargeState(_clamp01(1.0 - remaining))


def charge_headroom(cell: CellParameters, state: ChargeState, constants: ModelConstants) -> float:
    """Effective charge above the correctness floor, normalised so a full nominal cell is 1."""
    q = state.charge * cell.charge_capacity
    return (q - constants.min_correct_charge) / (1.0 - constants.min_correct_charge)


def required_sense_time(cell: CellParameters, initial: ChargeState, constants: ModelConstants) -> float:
    """Minimum tRCD in ns, or :data:`UNSENSABLE` below the charge floor."""
    u = charge_headroom(cell, initial, constants)
    if u <= 0.0:
        return UNSENSABLE
    speed = cell.fill_time_constant / constants.nominal_fill_time_constant
    return constants.sense_base_time * speed * u ** (-constants.sense_exponent)


def required_precharge_time(cell: CellParameters, post_access: ChargeState, constants: ModelConstants) -> float:
    """Linear ramp from the full base time at the floor down to half of it.

    The ramp bottoms out once the headroom reaches ``precharge_saturation``
    (1.0 means at full nominal charge).
    """
    u = _clamp01(charge_headroom(cell, post_access, constants) / constants.precharge_saturation)
    return constants.precharge_base_time * (1.0 - 0.5 * u)


def access_outcome(
    cell: CellParameters,
    timing: TimingSet,
    op: OperatingPoint,
    time_since_refresh: float,
    kind: AccessKind,
    constants: ModelConstants,
    noise_draw: Optional[float] = None,
) -> Outcome:
    """Decide whether one access under ``timing`` returns correct data.

    The cell starts fully restored and leaks for ``time_since_refresh``. The
    sensed charge must support tRCD. Restoration then rebuilds charge: a read
    starts from a fraction of the sensed charge and runs for tRAS minus the
    sense time; a write starts from zero (the opposite value) and runs for tWR
    through the write driver. The restored charge must allow precharge within
    tRP, and must still be above the correctness floor after another
    ``time_since_refresh`` of leakage.
    """
    if time_since_refresh > timing.refresh_interval:
        raise ValueError("time_since_refresh exceeds the refresh interval")
    kind = AccessKind(kind)
    full = ChargeState(1.0)
    c0 = leak(full, cell, time_since_refresh, op, constants).charge
    if noise_draw is not None and constants.noise_sigma > 0.0:
        c0 = _clamp01(c0 + noise_draw * constants.noise_sigma)
    sense = required_sense_time(cell, ChargeState(c0), constants)
    if not timing.t_rcd >= sense:
        return Outcome.ERROR
    if kind is AccessKind.READ:
        duration = timing.t_ras - sense
        start = constants.read_restore_start * c0
    else:
        duration = timing.t_wr / constants.write_drive_ratio
        start = 0.0
    if duration < 0.0:
        return Outcome.ERROR
    restored = restore(ChargeState(start), cell, duration)
    held = leak(restored, cell, time_since_refresh, op, constants)
    if charge_headroom(cell, held, constants) <= 0.0:
        return Outcome.ERROR
    if timing.t_rp < required_precharge_time(cell, restored, constants):
        return Outcome.ERROR
    return Outcome.SUCCESS
