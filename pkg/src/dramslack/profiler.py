"""Profiling of synthetic modules: refresh sweeps, timing sweeps and fleet statistics.

The flow for one module mirrors a bench characterisation:

1. sweep the refresh interval at 85 C with standard timings (per kind);
2. back off one sweep step to get the safe refresh interval;
3. at that interval, test every timing combination of a grid at 55 C and 85 C.

Timing sweeps use an exact separable form of the cell model: a grid point is
error-free iff tRCD covers the slowest cell's sense time and tRP covers the
largest precharge requirement at that tRAS (or tWR). The brute-force
per-point evaluation is kept in :func:`sweep_timings_bruteforce` as an oracle.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .device import (
    STANDARD_TIMINGS,
    TYPICAL_TEMPERATURE,
    WORST_CASE_TEMPERATURE,
    AccessKind,
    ModelConstants,
    OperatingPoint,
    Outcome,
    TimingSet,
    access_outcome,
    CellParameters,
)
from .population import Module, Population

TEMPERATURES = (TYPICAL_TEMPERATURE, WORST_CASE_TEMPERATURE)
KINDS = (AccessKind.READ, AccessKind.WRITE)
PARAMETERS = ("t_rcd", "t_ras", "t_wr", "t_rp")


class DegenerateProfileError(ValueError):
    """A module has no usable retention or no error-free timing set."""


def _steps(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 10) for i in range(n + 1))


def _with(values: Sequence[float], extra: float) -> tuple[float, ...]:
    return tuple(sorted(set(float(v) for v in values) | {float(extra)}))


@dataclass(frozen=True)
class TimingGrid:
    """Candidate values per timing parameter (ns). Standard values are always included."""

    t_rcd: tuple = _steps(5.0, 15.0, 1.25)
    t_ras: tuple = _steps(17.5, 37.5, 2.5)
    t_wr: tuple = _steps(5.0, 17.5, 1.25)
    t_rp: tuple = _steps(5.0, 15.0, 1.25)

    def __post_init__(self):
        for name in PARAMETERS:
            vals = tuple(sorted(float(v) for v in getattr(self, name)))
            if not vals:
                raise ValueError(f"grid for {name} is empty")
            if vals[0] <= 0.0:
                raise ValueError(f"grid values for {name} must be positive")
            object.__setattr__(self, name, vals)

    def including(self, standard: TimingSet) -> "TimingGrid":
        return TimingGrid(*(_with(getattr(self, p), getattr(standard, p)) for p in PARAMETERS))

    def restoration_values(self, kind: AccessKind) -> tuple:
        return self.t_ras if AccessKind(kind) is AccessKind.READ else self.t_wr

    def size(self, kind: AccessKind) -> int:
        return len(self.t_rcd) * len(self.restoration_values(kind)) * len(self.t_rp)

    def to_dict(self) -> dict:
        return {p: list(getattr(self, p)) for p in PARAMETERS}

    @classmethod
    def from_dict(cls, d: dict) -> "TimingGrid":
        return cls(**{p: tuple(d[p]) for p in PARAMETERS if p in d})


@dataclass(frozen=True)
class RetentionProfile:
    """Largest error-free refresh interval (ms) per bank, per chip and for the module."""

    per_bank: np.ndarray  # (chips, banks)
    per_chip: np.ndarray  # (chips,)
    module_level: float
    op_kind: AccessKind
    temperature: float
    sweep_step: float

    def to_dict(self) -> dict:
        return {
            "per_bank": self.per_bank.tolist(),
            "per_chip": self.per_chip.tolist(),
            "module_level": self.module_level,
            "op_kind": self.op_kind.value,
            "temperature": self.temperature,
            "sweep_step": self.sweep_step,
        }


@dataclass(frozen=True)
class SweepResult:
    """Error-free flags over a timing grid for one module, kind, temperature and refresh interval."""

    kind: AccessKind
    temperature: float
    refresh_interval: float
    grid: TimingGrid
    standard: TimingSet
    mask: np.ndarray  # (n_rcd, n_ras or n_wr, n_rp)

    def _timing(self, i: int, j: int, k: int) -> TimingSet:
        mid = self.grid.restoration_values(self.kind)[j]
        if self.kind is AccessKind.READ:
            ras, wr = mid, self.standard.t_wr
        else:
            ras, wr = self.standard.t_ras, mid
        return TimingSet(self.grid.t_rcd[i], ras, wr, self.grid.t_rp[k], self.refresh_interval)

    def points(self):
        """Yield (TimingSet, error_free) for every grid point in grid order."""
        for i, j, k in itertools.product(*(range(n) for n in self.mask.shape)):
            yield self._timing(i, j, k), bool(self.mask[i, j, k])

    def error_free_sets(self) -> list[TimingSet]:
        return [self._timing(*idx) for idx in zip(*np.nonzero(self.mask))]

    def count(self) -> int:
        return int(self.mask.sum())

    def contains(self, timing: TimingSet) -> bool:
        try:
            i = self.grid.t_rcd.index(timing.t_rcd)
            j = self.grid.restoration_values(self.kind).index(
                timing.t_ras if self.kind is AccessKind.READ else timing.t_wr
            )
            k = self.grid.t_rp.index(timing.t_rp)
        except ValueError:
            return False
        return bool(self.mask[i, j, k])

    def minimal_set(self, cap: Optional[TimingSet] = None) -> Optional[TimingSet]:
        """Smallest latency sum; ties go to smaller tRCD, then tRAS/tWR, then tRP.

        With ``cap``, only points whose every swept value is at most the cap's are considered.
        """
        rcd = np.asarray(self.grid.t_rcd)[:, None, None]
        mid = np.asarray(self.grid.restoration_values(self.kind))[None, :, None]
        rp = np.asarray(self.grid.t_rp)[None, None, :]
        mask = self.mask
        if cap is not None:
            cap_mid = cap.t_ras if self.kind is AccessKind.READ else cap.t_wr
            mask = mask & (rcd <= cap.t_rcd) & (mid <= cap_mid) & (rp <= cap.t_rp)
        if not mask.any():
            return None
        total = np.round(rcd + mid + rp, 9)
        total = np.where(mask, total, np.inf)
        best = total.min()
        # grid values are sorted, so the first hit in C order is the lexicographic minimum
        idx = np.argwhere(total == best)[0]
        return self._timing(*idx)


@dataclass(frozen=True)
class ModuleProfile:
    module_id: int
    role: str
    retention: dict  # kind -> RetentionProfile at 85 C
    safe_refresh_read: float
    safe_refresh_write: float
    sweeps: dict  # (temperature, kind) -> SweepResult
    minimal_sets: dict  # (temperature, kind) -> TimingSet
    standard: TimingSet

    @property
    def safe_refresh(self) -> float:
        return min(self.safe_refresh_read, self.safe_refresh_write)

    def safe_refresh_for(self, kind: AccessKind) -> float:
        return self.safe_refresh_read if AccessKind(kind) is AccessKind.READ else self.safe_refresh_write

    def error_free_sets(self, temperature: float, kind: AccessKind) -> list[TimingSet]:
        return self.sweeps[(float(temperature), AccessKind(kind))].error_free_sets()

    def minimal_set(self, temperature: float, kind: AccessKind) -> TimingSet:
        return self.minimal_sets[(float(temperature), AccessKind(kind))]

    def capped_minimal_set(self, temperature: float, kind: AccessKind) -> TimingSet:
        best = self.sweeps[(float(temperature), AccessKind(kind))].minimal_set(cap=self.standard)
        if best is None:
            raise DegenerateProfileError(f"module {self.module_id}: standard set not error-free at {temperature} C")
        return best

    def combined_set(self, temperature: float) -> TimingSet:
        """One set safe for both reads and writes at ``temperature``, never above the standard set.

        Per kind, take the smallest-sum error-free set among those at or below
        the standard values (the standard set itself always qualifies). tRCD and
        tRP take the larger of the read and write choices, tRAS comes from the
        read sweep, tWR from the write sweep. Each sweep's error-free set is
        upward-closed, so the result is error-free for both kinds.
        """
        r = self.capped_minimal_set(temperature, AccessKind.READ)
        w = self.capped_minimal_set(temperature, AccessKind.WRITE)
        return TimingSet(
            t_rcd=max(r.t_rcd, w.t_rcd),
            t_ras=r.t_ras,
            t_wr=w.t_wr,
            t_rp=max(r.t_rp, w.t_rp),
            refresh_interval=self.safe_refresh,
        )

    def latency_sum_reduction(self, temperature: float, kind: AccessKind) -> float:
        kind = AccessKind(kind)
        return 100.0 * (1.0 - self.minimal_set(temperature, kind).latency_sum(kind) / self.standard.latency_sum(kind))

    def parameter_reductions(self, temperature: float) -> dict:
        c = self.combined_set(temperature)
        return {p: 100.0 * (1.0 - getattr(c, p) / getattr(self.standard, p)) for p in PARAMETERS}

    def to_dict(self) -> dict:
        temps = sorted({t for t, _ in self.sweeps})
        return {
            "module_id": self.module_id,
            "role": self.role,
            "retention": {k.value: self.retention[k].to_dict() for k in KINDS},
            "safe_refresh_read": self.safe_refresh_read,
            "safe_refresh_write": self.safe_refresh_write,
            "minimal_sets": {
                f"{t:g}": {k.value: self.minimal_set(t, k).to_dict() for k in KINDS} for t in temps
            },
            "combined_sets": {f"{t:g}": self.combined_set(t).to_dict() for t in temps},
            "error_free_counts": {
                f"{t:g}": {k.value: self.sweeps[(t, k)].count() for k in KINDS} for t in temps
            },
            "latency_sum_reduction": {
                f"{t:g}": {k.value: self.latency_sum_reduction(t, k) for k in KINDS} for t in temps
            },
            "parameter_reduction": {f"{t:g}": self.parameter_reductions(t) for t in temps},
        }


@dataclass(frozen=True)
class FleetSummary:
    per_parameter_mean_reduction: dict  # temperature -> {parameter: percent}
    read_latency_sum_reduction: dict  # temperature -> percent
    write_latency_sum_reduction: dict  # temperature -> percent
    module_count: int
    # spread diagnostics: population std of reductions across modules and of retention per scope
    read_reduction_std: dict = field(default_factory=dict)
    retention_std: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        key = lambda d: {f"{t:g}": v for t, v in sorted(d.items())}
        return {
            "module_count": self.module_count,
            "per_parameter_mean_reduction": key(self.per_parameter_mean_reduction),
            "read_latency_sum_reduction": key(self.read_latency_sum_reduction),
            "write_latency_sum_reduction": key(self.write_latency_sum_reduction),
            "read_reduction_std": key(self.read_reduction_std),
            "retention_std": dict(self.retention_std),
        }


# ------------------------------------------------------------------ operations


def _timing_tuple(t: TimingSet) -> tuple:
    return (t.t_rcd, t.t_ras, t.t_wr, t.t_rp)


def _prm(constants: Optional[ModelConstants]) -> np.ndarray:
    return kernels.pack_constants(constants or ModelConstants())


def sweep_refresh(
    module: Module,
    timing: TimingSet = STANDARD_TIMINGS,
    op: OperatingPoint = OperatingPoint(WORST_CASE_TEMPERATURE),
    kind: AccessKind = AccessKind.READ,
    step: float = 8.0,
    constants: Optional[ModelConstants] = None,
    max_interval: float = 512.0,
) -> RetentionProfile:
    """Largest multiple of ``step`` (up to ``max_interval``) at which every cell in scope passes.

    A value of 0 marks a scope that fails already at the first step.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    kind = AccessKind(kind)
    nmax = int(max_interval // step)
    per_cell = kernels.retention(
        module.columns(), _timing_tuple(timing), op.temperature, kernels.kind_code(kind), step, nmax, _prm(constants)
    )
    per_cell = per_cell.reshape(module.cells.shape[:3])
    per_bank = per_cell.min(axis=2)
    per_chip = per_bank.min(axis=1)
    return RetentionProfile(per_bank, per_chip, float(per_chip.min()), kind, float(op.temperature), float(step))


def safe_refresh(retention: RetentionProfile) -> float:
    if retention.module_level < retention.sweep_step:
        raise DegenerateProfileError(
            f"module retention {retention.module_level} ms is below one sweep step ({retention.sweep_step} ms)"
        )
    return retention.module_level - retention.sweep_step


def sweep_timings(
    module: Module,
    safe_refresh: float,
    op: OperatingPoint,
    kind: AccessKind,
    grid: TimingGrid = TimingGrid(),
    constants: Optional[ModelConstants] = None,
    standard: TimingSet = STANDARD_TIMINGS,
) -> SweepResult:
    """Error-free flags for every grid point at ``time_since_refresh = safe_refresh``."""
    kind = AccessKind(kind)
    if not safe_refresh > 0:
        raise DegenerateProfileError("safe refresh interval must be positive")
    mask = kernels.grid_mask(
        module.columns(),
        op.temperature,
        safe_refresh,
        kernels.kind_code(kind),
        grid.t_rcd,
        grid.restoration_values(kind),
        grid.t_rp,
        _prm(constants),
    )
    return SweepResult(kind, float(op.temperature), float(safe_refresh), grid, standard, mask)


def sweep_timings_bruteforce(
    cells: Sequence[CellParameters],
    safe_refresh: float,
    op: OperatingPoint,
    kind: AccessKind,
    grid: TimingGrid,
    constants: ModelConstants,
    standard: TimingSet = STANDARD_TIMINGS,
) -> np.ndarray:
    """Reference mask: scalar :func:`access_outcome` for every cell at every grid point."""
    kind = AccessKind(kind)
    mids = grid.restoration_values(kind)
    mask = np.zeros((len(grid.t_rcd), len(mids), len(grid.t_rp)), dtype=bool)
    for (i, rcd), (j, mid), (k, rp) in itertools.product(enumerate(grid.t_rcd), enumerate(mids), enumerate(grid.t_rp)):
        ras, wr = (mid, standard.t_wr) if kind is AccessKind.READ else (standard.t_ras, mid)
        t = TimingSet(rcd, ras, wr, rp, safe_refresh)
        mask[i, j, k] = all(
            access_outcome(c, t, op, safe_refresh, kind, constants) is Outcome.SUCCESS for c in cells
        )
    return mask


def profile_module(
    module: Module,
    grid: TimingGrid = TimingGrid(),
    temperatures: Sequence[float] = TEMPERATURES,
    constants: Optional[ModelConstants] = None,
    standard: TimingSet = STANDARD_TIMINGS,
    step: float = 8.0,
    max_interval: float = 512.0,
) -> ModuleProfile:
    """Refresh sweep at 85 C, safe interval, then timing sweeps at every temperature."""
    constants = (constants or ModelConstants()).without_noise()
    grid = grid.including(standard)
    hot = OperatingPoint(WORST_CASE_TEMPERATURE)
    retention, safe, sweeps, minimal = {}, {}, {}, {}
    for kind in KINDS:
        retention[kind] = sweep_refresh(module, standard, hot, kind, step, constants, max_interval)
        safe[kind] = safe_refresh(retention[kind])
        for temp in temperatures:
            res = sweep_timings(module, safe[kind], OperatingPoint(temp), kind, grid, constants, standard)
            best = res.minimal_set()
            if best is None:
                raise DegenerateProfileError(f"module {module.index}: no error-free {kind.value} set at {temp} C")
            sweeps[(float(temp), kind)] = res
            minimal[(float(temp), kind)] = best
    return ModuleProfile(
        module_id=module.index,
        role=module.role,
        retention=retention,
        safe_refresh_read=safe[AccessKind.READ],
        safe_refresh_write=safe[AccessKind.WRITE],
        sweeps=sweeps,
        minimal_sets=minimal,
        standard=standard,
    )


def _profile_job(args):
    return profile_module(*args)


def profile_fleet(
    population: Population,
    grid: TimingGrid = TimingGrid(),
    temperatures: Sequence[float] = TEMPERATURES,
    constants: Optional[ModelConstants] = None,
    standard: TimingSet = STANDARD_TIMINGS,
    workers: int = 1,
) -> list[ModuleProfile]:
    """Profile every module; results come back in module order for any worker count."""
    jobs = [(m, grid, tuple(temperatures), constants, standard) for m in population.modules]
    if workers <= 1 or len(jobs) <= 1:
        return [_profile_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_profile_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def summarize_fleet(profiles: Sequence[ModuleProfile]) -> FleetSummary:
    """Arithmetic means over modules of the reductions relative to the standard set."""
    if not profiles:
        raise ValueError("no profiles to summarize")
    # order-independent: sort by module id before reducing
    profiles = sorted(profiles, key=lambda p: p.module_id)
    temps = sorted({t for p in profiles for t, _ in p.sweeps})
    per_param, read, write, read_std = {}, {}, {}, {}
    for t in temps:
        per_param[t] = {p: float(np.mean([m.parameter_reductions(t)[p] for m in profiles])) for p in PARAMETERS}
        r = np.array([m.latency_sum_reduction(t, AccessKind.READ) for m in profiles])
        read[t] = float(r.mean())
        read_std[t] = float(r.std())
        write[t] = float(np.mean([m.latency_sum_reduction(t, AccessKind.WRITE) for m in profiles]))
    # retention spread over sampled modules only; the pinned calibration modules are outliers by design
    sampled = [m for m in profiles if not m.role] or profiles
    ret = {
        "bank": float(np.std(np.concatenate([m.retention[AccessKind.READ].per_bank.ravel() for m in sampled]))),
        "chip": float(np.std(np.concatenate([m.retention[AccessKind.READ].per_chip for m in sampled]))),
        "module": float(np.std([m.retention[AccessKind.READ].module_level for m in sampled])),
    }
    return FleetSummary(per_param, read, write, len(profiles), read_std, ret)


def refresh_latency_tradeoff(
    module: Module,
    refresh_intervals: Sequence[float],
    op: OperatingPoint = OperatingPoint(WORST_CASE_TEMPERATURE),
    kind: AccessKind = AccessKind.READ,
    grid: TimingGrid = TimingGrid(),
    constants: Optional[ModelConstants] = None,
    standard: TimingSet = STANDARD_TIMINGS,
) -> list[tuple[float, Optional[float]]]:
    """Minimal latency sum at each refresh interval; None where no grid point is error-free."""
    intervals = [float(x) for x in refresh_intervals]
    if any(x <= 0 for x in intervals) or intervals != sorted(intervals):
        raise ValueError("refresh intervals must be positive and ascending")
    kind = AccessKind(kind)
    constants = (constants or ModelConstants()).without_noise()
    grid = grid.including(standard)
    out = []
    for t in intervals:
        best = sweep_timings(module, t, op, kind, grid, constants, standard).minimal_set()
        out.append((t, None if best is None else best.latency_sum(kind)))
    return out


@dataclass(frozen=True)
class RepeatabilityResult:
    """Outcome of repeated noisy accesses. ``fraction`` is None when no cell ever failed."""

    fraction: Optional[float]
    failed_any: int
    failed_all: int
    iterations: int

    @property
    def no_failures(self) -> bool:
        return self.failed_any == 0


def repeatability_analysis(
    module: Module,
    reduced: TimingSet,
    op: OperatingPoint,
    iterations: int,
    noise_sigma: float,
    kind: AccessKind = AccessKind.READ,
    constants: Optional[ModelConstants] = None,
    seed: int = 0,
) -> RepeatabilityResult:
    """Among cells that fail at least once over ``iterations`` noisy accesses, the share failing every time.

    Each access happens ``reduced.refresh_interval`` after refresh.
    """
    if iterations < 2:
        raise ValueError("iterations must be >= 2")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    kind = AccessKind(kind)
    prm = _prm(constants)
    cols = module.columns()
    n = cols[0].shape[0]
    rng = np.random.default_rng([int(seed), int(module.index)])
    fail_count = np.zeros(n, dtype=np.int64)
    for _ in range(iterations):
        noise = rng.standard_normal(n)
        ok = kernels.pass_mask(
            cols, _timing_tuple(reduced), op.temperature, reduced.refresh_interval,
            kernels.kind_code(kind), prm, noise, noise_sigma,
        )
        fail_count += ~ok
    failed_any = int((fail_count > 0).sum())
    failed_all = int((fail_count == iterations).sum())
    fraction = failed_all / failed_any if failed_any else None
    return RepeatabilityResult(fraction, failed_any, failed_all, iterations)


def one_step_below(timing: TimingSet, grid: TimingGrid, parameter: str = "t_rcd") -> TimingSet:
    """The grid value just below ``timing``'s ``parameter``, other fields unchanged."""
    values = [v for v in getattr(grid, parameter) if v < getattr(timing, parameter)]
    if not values:
        raise ValueError(f"{parameter} is already at the bottom of the grid")
    return replace(timing, **{parameter: values[-1]})
