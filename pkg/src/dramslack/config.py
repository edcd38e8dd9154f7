"""Run configuration: one flat JSON object of dotted keys with embedded defaults."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .controller import LatencyModelConstants, TraceSpec
from .device import STANDARD_TIMINGS, ModelConstants, TimingSet
from .population import PopulationSpec
from .profiler import TimingGrid

SECTIONS = ("population", "constants", "grid", "standard", "trace", "latency", "profile")


@dataclass(frozen=True)
class ProfileSettings:
    refresh_step: float = 8.0
    max_refresh: float = 512.0
    repeatability_iterations: int = 10
    repeatability_seed: int = 1
    tradeoff_intervals: tuple = (32.0, 64.0, 128.0, 152.0, 200.0)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["tradeoff_intervals"] = list(self.tradeoff_intervals)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileSettings":
        kw = dict(d)
        for k in ("repeatability_iterations", "repeatability_seed"):
            if k in kw:
                kw[k] = int(kw[k])
        if "tradeoff_intervals" in kw:
            kw["tradeoff_intervals"] = tuple(float(x) for x in kw["tradeoff_intervals"])
        return cls(**kw)


@dataclass(frozen=True)
class RunConfig:
    population: PopulationSpec = field(default_factory=PopulationSpec)
    constants: ModelConstants = field(default_factory=ModelConstants)
    grid: TimingGrid = field(default_factory=TimingGrid)
    standard: TimingSet = STANDARD_TIMINGS
    bins: tuple = (55.0, 85.0)
    trace: TraceSpec = field(default_factory=TraceSpec)
    latency: LatencyModelConstants = field(default_factory=LatencyModelConstants)
    profile: ProfileSettings = field(default_factory=ProfileSettings)
    output_dir: str = "out"

    def to_flat(self) -> dict:
        flat = {"bins": list(self.bins), "output_dir": self.output_dir}
        for name in SECTIONS:
            for k, v in getattr(self, name).to_dict().items():
                flat[f"{name}.{k}"] = list(v) if isinstance(v, tuple) else v
        return flat

    def dumps(self) -> str:
        return json.dumps(self.to_flat(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        default = cls()
        parts = {name: getattr(default, name).to_dict() for name in SECTIONS}
        top = {"bins": default.bins, "output_dir": default.output_dir}
        for key, value in flat.items():
            if "." in key:
                section, sub = key.split(".", 1)
                if section not in parts or sub not in parts[section]:
                    raise ValueError(f"unknown config key {key!r}")
                parts[section][sub] = value
            elif key in top:
                top[key] = value
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(
            population=PopulationSpec.from_dict(parts["population"]),
            constants=ModelConstants.from_dict(parts["constants"]),
            grid=TimingGrid.from_dict(parts["grid"]),
            standard=TimingSet.from_dict(parts["standard"]),
            bins=tuple(float(b) for b in top["bins"]),
            trace=TraceSpec.from_dict(parts["trace"]),
            latency=LatencyModelConstants(**{k: float(v) for k, v in parts["latency"].items()}),
            profile=ProfileSettings.from_dict(parts["profile"]),
            output_dir=str(top["output_dir"]),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_flat(doc)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, population=replace(self.population, seed=int(seed)))
