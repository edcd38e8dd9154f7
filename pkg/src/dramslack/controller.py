"""Adaptive-latency memory controller model.

The controller keeps, per module, a small table of timing sets indexed by
temperature bin and picks the set of the smallest bin whose upper bound covers
the current temperature. Request latency uses stateless open-page command
accounting, so a trace's mean latency is a plain average over its requests.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .device import STANDARD_TIMINGS, AccessKind, OperatingPoint, TimingSet
from .profiler import ModuleProfile


class Locality(str, enum.Enum):
    ROW_HIT = "RowHit"
    ROW_MISS = "RowMiss"
    ROW_CONFLICT = "RowConflict"


LOCALITIES = (Locality.ROW_HIT, Locality.ROW_MISS, Locality.ROW_CONFLICT)


@dataclass(frozen=True)
class MemoryRequest:
    kind: AccessKind
    locality: Locality

    def __post_init__(self):
        object.__setattr__(self, "kind", AccessKind(self.kind))
        object.__setattr__(self, "locality", Locality(self.locality))


@dataclass(frozen=True)
class LatencyModelConstants:
    """Column latencies (ns); they do not change with the adaptive set."""

    t_cl: float = 13.75
    t_cwl: float = 11.25

    def to_dict(self) -> dict:
        return {"t_cl": self.t_cl, "t_cwl": self.t_cwl}


@dataclass(frozen=True)
class TimingTable:
    """Ascending (bin upper bound in C, TimingSet) entries plus the standard fallback."""

    entries: tuple = ()
    fallback: TimingSet = STANDARD_TIMINGS

    def __post_init__(self):
        entries = tuple((float(b), t) for b, t in self.entries)
        bounds = [b for b, _ in entries]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ValueError("bin bounds must be strictly ascending")
        object.__setattr__(self, "entries", entries)

    @property
    def bounds(self) -> tuple:
        return tuple(b for b, _ in self.entries)

    def to_dict(self) -> dict:
        return {
            "entries": [{"bin_upper_bound": b, "timing": t.to_dict()} for b, t in self.entries],
            "fallback": self.fallback.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimingTable":
        return cls(
            tuple((e["bin_upper_bound"], TimingSet.from_dict(e["timing"])) for e in d["entries"]),
            TimingSet.from_dict(d["fallback"]),
        )


@dataclass(frozen=True)
class TraceReport:
    baseline_latencies: np.ndarray
    adaptive_latencies: np.ndarray
    baseline_mean_ns: float
    adaptive_mean_ns: float

    @property
    def speedup(self) -> float:
        return self.baseline_mean_ns / self.adaptive_mean_ns

    @property
    def mean_latency_reduction(self) -> float:
        """Fractional drop in mean latency, 0..1."""
        return 1.0 - self.adaptive_mean_ns / self.baseline_mean_ns

    def to_dict(self) -> dict:
        return {
            "requests": int(self.baseline_latencies.shape[0]),
            "mean_latency_ns": {"baseline": self.baseline_mean_ns, "adaptive": self.adaptive_mean_ns},
            "speedup": self.speedup,
            "mean_latency_reduction": self.mean_latency_reduction,
        }


# ------------------------------------------------------------------ table


def build_table(profile: ModuleProfile, bins: Sequence[float] = (55.0, 85.0)) -> TimingTable:
    """One entry per bin from the profile's combined (read and write safe) minimal set."""
    profiled = {t for t, _ in profile.sweeps}
    bins = sorted(float(b) for b in bins)
    missing = [b for b in bins if b not in profiled]
    if missing:
        raise ValueError(f"bins {missing} were not profiled (profiled: {sorted(profiled)})")
    return TimingTable(tuple((b, profile.combined_set(b)) for b in bins), profile.standard)


def select_timings(table: TimingTable, current: OperatingPoint) -> TimingSet:
    """Entry of the smallest bin bound >= the current temperature, else the fallback."""
    for bound, timing in table.entries:
        if bound >= current.temperature:
            return timing
    return table.fallback


def scaled_timings(standard: TimingSet, reductions: dict) -> TimingSet:
    """``standard`` with each named parameter reduced by a fraction (0.27 = 27%)."""
    kw = standard.to_dict()
    for name, frac in reductions.items():
        kw[name] = kw[name] * (1.0 - frac)
    return TimingSet(**kw)


# ------------------------------------------------------------------ latency


def request_latency(
    req: MemoryRequest, timing: TimingSet, constants: LatencyModelConstants = LatencyModelConstants()
) -> float:
    col = constants.t_cl if req.kind is AccessKind.READ else constants.t_cwl
    if req.locality is Locality.ROW_HIT:
        return col
    if req.locality is Locality.ROW_MISS:
        return timing.t_rcd + col
    if req.kind is AccessKind.READ:
        return timing.t_rp + timing.t_rcd + col
    return timing.t_wr + timing.t_rp + timing.t_rcd + col


def _latencies(kinds, locs, timings, which, constants) -> np.ndarray:
    """Vectorised :func:`request_latency` with per-request timing index ``which``."""
    rcd = np.array([t.t_rcd for t in timings])[which]
    rp = np.array([t.t_rp for t in timings])[which]
    wr = np.array([t.t_wr for t in timings])[which]
    is_read = kinds == 0
    col = np.where(is_read, constants.t_cl, constants.t_cwl)
    out = col.copy()
    miss = locs == 1
    conf = locs == 2
    out[miss] = rcd[miss] + col[miss]
    # same operand order as request_latency for bit-identical sums
    cr = conf & is_read
    cw = conf & ~is_read
    out[cr] = rp[cr] + rcd[cr] + col[cr]
    out[cw] = wr[cw] + rp[cw] + rcd[cw] + col[cw]
    return out


def _encode(trace: Sequence[MemoryRequest]) -> tuple[np.ndarray, np.ndarray]:
    kinds = np.fromiter((0 if r.kind is AccessKind.READ else 1 for r in trace), dtype=np.int8, count=len(trace))
    locs = np.fromiter((LOCALITIES.index(r.locality) for r in trace), dtype=np.int8, count=len(trace))
    return kinds, locs


def simulate_trace(
    trace: Sequence[MemoryRequest],
    table: TimingTable,
    temperature_series: Sequence[OperatingPoint],
    constants: LatencyModelConstants = LatencyModelConstants(),
) -> TraceReport:
    """Latency of every request under the fallback set and under the adaptive table.

    Means use exactly rounded summation, so they do not depend on request order.
    """
    n = len(trace)
    if n == 0:
        raise ValueError("trace is empty")
    if len(temperature_series) not in (1, n):
        raise ValueError("temperature series must have length 1 or match the trace")
    kinds, locs = _encode(trace)
    choices = [t for _, t in table.entries] + [table.fallback]
    sel = np.empty(len(temperature_series), dtype=np.int64)
    for i, op in enumerate(temperature_series):
        chosen = select_timings(table, op)
        sel[i] = next(j for j, t in enumerate(choices) if t is chosen)
    which = np.broadcast_to(sel, (n,)) if sel.shape[0] == 1 else sel
    base = _latencies(kinds, locs, [table.fallback], np.zeros(n, dtype=np.int64), constants)
    adapt = _latencies(kinds, locs, choices, which, constants)
    return TraceReport(base, adapt, math.fsum(base) / n, math.fsum(adapt) / n)


# ------------------------------------------------------------------ traces


@dataclass(frozen=True)
class TraceSpec:
    """Request mix for synthetic traces: (hit, miss, conflict) shares and read share."""

    mix: tuple = (0.2, 0.3, 0.5)
    read_fraction: float = 0.7
    length: int = 100_000
    seed: int = 7
    temperature: float = 55.0

    def __post_init__(self):
        object.__setattr__(self, "mix", tuple(float(x) for x in self.mix))
        validate_mix(self.mix, self.read_fraction, self.length)
        OperatingPoint(self.temperature)

    def to_dict(self) -> dict:
        return {
            "mix": list(self.mix),
            "read_fraction": self.read_fraction,
            "length": self.length,
            "seed": self.seed,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceSpec":
        kw = dict(d)
        for k in ("length", "seed"):
            if k in kw:
                kw[k] = int(kw[k])
        return cls(**kw)


def validate_mix(mix: Sequence[float], read_fraction: float, length: int) -> None:
    if len(mix) != 3 or any(not (x >= 0.0) for x in mix) or abs(sum(mix) - 1.0) > 1e-9:
        raise ValueError(f"mix must be three non-negative shares summing to 1, got {tuple(mix)}")
    if not 0.0 <= read_fraction <= 1.0:
        raise ValueError("read_fraction must be in [0, 1]")
    if length < 1:
        raise ValueError("length must be >= 1")


def generate_trace(
    mix: Sequence[float], read_fraction: float, length: int, seed: int
) -> list[MemoryRequest]:
    """Independent draw of locality and kind per request."""
    validate_mix(mix, read_fraction, length)
    rng = np.random.default_rng(int(seed))
    p = np.asarray(mix, dtype=np.float64)
    locs = rng.choice(3, size=length, p=p / p.sum())
    reads = rng.random(length) < read_fraction
    kinds = (AccessKind.READ, AccessKind.WRITE)
    return [MemoryRequest(kinds[0 if r else 1], LOCALITIES[l]) for l, r in zip(locs, reads)]


# ------------------------------------------------------------------ files


def trace_to_csv(trace: Sequence[MemoryRequest]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "locality"])
    for r in trace:
        w.writerow([r.kind.value, r.locality.value])
    return buf.getvalue()


def trace_from_csv(text: str) -> list[MemoryRequest]:
    rows = csv.DictReader(io.StringIO(text))
    return [MemoryRequest(AccessKind(r["kind"].strip().lower()), Locality(r["locality"].strip())) for r in rows]


def temperatures_to_csv(series: Sequence[OperatingPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_index", "celsius"])
    for i, op in enumerate(series):
        w.writerow([i, f"{op.temperature:.6g}"])
    return buf.getvalue()


def temperatures_from_csv(text: str) -> list[OperatingPoint]:
    rows = sorted(csv.DictReader(io.StringIO(text)), key=lambda r: int(r["time_index"]))
    return [OperatingPoint(float(r["celsius"])) for r in rows]
