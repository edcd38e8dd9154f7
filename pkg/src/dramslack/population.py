"""Synthetic DRAM fleet: module -> chip -> bank -> sampled tail cells.

A real bank holds ~1e8 cells but only its weakest ones matter, so every
sampled cell is an extreme-value draw: per axis, the worst of ``batch_size``
implicit lognormal cells, obtained in one step through the inverse CDF of the
sample minimum (or maximum). Each axis is drawn independently.

Two modules are special. Module 0 is the *representative* module: its first
cell is pinned to the representative calibration cell and every other cell is
clamped so it is at least as good on each axis. The last module is the
*worst-case* module: its first cell is pinned to the worst-case calibration
cell, which is also the per-axis floor for every draw in the fleet.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

from . import kernels
from .device import (
    STANDARD_TIMINGS,
    WORST_CASE_TEMPERATURE,
    AccessKind,
    CellParameters,
    ModelConstants,
    TimingSet,
)

# column order of the per-cell arrays
CAPACITY, FILL, LEAK = 0, 1, 2

REPRESENTATIVE_CELL = CellParameters(0.999861, 112.159, 99.6805)
WORST_CASE_CELL = CellParameters(0.999731, 309.3, 99.6805)


@dataclass(frozen=True)
class PopulationSpec:
    """Shape, variation and seed of a synthetic fleet."""

    module_count: int = 115
    chips_per_module: int = 8
    banks_per_chip: int = 8
    sampled_cells_per_bank: int = 64
    variation_sigma: float = 0.085
    seed: int = 2016
    # implicit cells behind each sampled tail cell
    batch_size: int = 1_000_000
    representative_cell: tuple = REPRESENTATIVE_CELL.as_tuple()
    worst_case_cell: tuple = WORST_CASE_CELL.as_tuple()

    def __post_init__(self):
        for name in ("module_count", "chips_per_module", "banks_per_chip", "sampled_cells_per_bank", "batch_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
        if not self.variation_sigma > 0.0:
            raise ValueError("variation_sigma must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "representative_cell", tuple(float(x) for x in self.representative_cell))
        object.__setattr__(self, "worst_case_cell", tuple(float(x) for x in self.worst_case_cell))
        rep = CellParameters(*self.representative_cell)
        worst = CellParameters(*self.worst_case_cell)
        if not rep.dominates(worst):
            raise ValueError("representative_cell must dominate worst_case_cell on every axis")

    @property
    def cells_per_module(self) -> int:
        return self.chips_per_module * self.banks_per_chip * self.sampled_cells_per_bank

    def to_dict(self) -> dict:
        d = asdict(self)
        d["representative_cell"] = list(self.representative_cell)
        d["worst_case_cell"] = list(self.worst_case_cell)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationSpec":
        kw = dict(d)
        for name in ("module_count", "chips_per_module", "banks_per_chip", "sampled_cells_per_bank", "batch_size", "seed"):
            if name in kw:
                kw[name] = int(kw[name])
        return cls(**kw)


@dataclass(frozen=True)
class Bank:
    cells: np.ndarray  # (n_cells, 3)

    def cell_array(self) -> np.ndarray:
        return self.cells

    def cell_parameters(self) -> list[CellParameters]:
        return [CellParameters(*map(float, row)) for row in self.cells]


@dataclass(frozen=True)
class Chip:
    cells: np.ndarray  # (n_banks, n_cells, 3)

    @property
    def banks(self) -> list[Bank]:
        return [Bank(b) for b in self.cells]

    def cell_array(self) -> np.ndarray:
        return self.cells.reshape(-1, 3)


@dataclass(frozen=True)
class Module:
    index: int
    cells: np.ndarray  # (n_chips, n_banks, n_cells, 3)
    role: str = ""

    @property
    def chips(self) -> list[Chip]:
        return [Chip(c) for c in self.cells]

    def cell_array(self) -> np.ndarray:
        return self.cells.reshape(-1, 3)

    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Contiguous (capacity, fill, leak) arrays for the kernels."""
        flat = self.cell_array()
        return tuple(np.ascontiguousarray(flat[:, k]) for k in range(3))


Scope = Union[Bank, Chip, Module]


@dataclass(frozen=True)
class Population:
    modules: tuple
    spec: PopulationSpec

    def __iter__(self) -> Iterator[Module]:
        return iter(self.modules)

    def __len__(self) -> int:
        return len(self.modules)

    @property
    def representative_module(self) -> Module:
        return self.modules[0]

    @property
    def worst_case_module(self) -> Module:
        return self.modules[-1]

    def to_json(self) -> str:
        doc = {"spec": self.spec.to_dict(), "modules": [m.cells.tolist() for m in self.modules]}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Population":
        doc = json.loads(text)
        spec = PopulationSpec.from_dict(doc["spec"])
        shape = (spec.chips_per_module, spec.banks_per_chip, spec.sampled_cells_per_bank, 3)
        modules = []
        for i, cells in enumerate(doc["modules"]):
            arr = np.asarray(cells, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"module {i} has shape {arr.shape}, expected {shape}")
            modules.append(Module(i, arr, _role(i, spec.module_count)))
        if len(modules) != spec.module_count:
            raise ValueError("module count does not match spec")
        return cls(tuple(modules), spec)


def _role(index: int, count: int) -> str:
    if index == 0:
        return "representative"
    if index == count - 1:
        return "worst_case"
    return ""


def tail_minimum_z(u: np.ndarray, batch: int) -> np.ndarray:
    """Standard-normal minimum of ``batch`` draws, by inverting its CDF at ``u``."""
    return ndtri(-np.expm1(np.log1p(-u) / batch))


def tail_maximum_z(u: np.ndarray, batch: int) -> np.ndarray:
    """Standard-normal maximum of ``batch`` draws, by inverting its CDF at ``u``."""
    return -ndtri(-np.expm1(np.log(u) / batch))


def module_rng(seed: int, module_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(module_index)])


def nominal_cell(constants: ModelConstants) -> tuple[float, float, float]:
    return (1.0, constants.nominal_fill_time_constant, constants.nominal_leakage_time_constant)


def sample_module_cells(spec: PopulationSpec, module_index: int, constants: ModelConstants) -> np.ndarray:
    """Draw one module's cells, shape (chips, banks, cells, 3), before pinning."""
    shape = (spec.chips_per_module, spec.banks_per_chip, spec.sampled_cells_per_bank)
    rng = module_rng(spec.seed, module_index)
    # open interval so both tails stay finite
    u = rng.random(shape + (3,))
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    s = spec.variation_sigma
    c_nom, tf_nom, tl_nom = nominal_cell(constants)
    cells = np.empty(shape + (3,))
    cells[..., CAPACITY] = np.minimum(c_nom * np.exp(s * tail_minimum_z(u[..., 0], spec.batch_size)), 1.0)
    cells[..., FILL] = tf_nom * np.exp(s * tail_maximum_z(u[..., 1], spec.batch_size))
    cells[..., LEAK] = tl_nom * np.exp(s * tail_minimum_z(u[..., 2], spec.batch_size))
    return _clamp_to(cells, spec.worst_case_cell)


def _clamp_to(cells: np.ndarray, floor: Sequence[float]) -> np.ndarray:
    """Make every cell at least as good as ``floor`` on each axis."""
    cells[..., CAPACITY] = np.maximum(cells[..., CAPACITY], floor[0])
    cells[..., FILL] = np.minimum(cells[..., FILL], floor[1])
    cells[..., LEAK] = np.maximum(cells[..., LEAK], floor[2])
    return cells


def generate_module(spec: PopulationSpec, module_index: int, constants: Optional[ModelConstants] = None) -> Module:
    constants = constants or ModelConstants()
    if not 0 <= module_index < spec.module_count:
        raise IndexError(module_index)
    cells = sample_module_cells(spec, module_index, constants)
    role = _role(module_index, spec.module_count)
    if role == "representative":
        cells = _clamp_to(cells, spec.representative_cell)
        cells[0, 0, 0] = spec.representative_cell
    elif role == "worst_case":
        cells[0, 0, 0] = spec.worst_case_cell
    return Module(module_index, cells, role)


def generate(spec: PopulationSpec, constants: Optional[ModelConstants] = None) -> Population:
    """Build the fleet. Each module has its own random stream, so order does not matter."""
    constants = constants or ModelConstants()
    return Population(tuple(generate_module(spec, i, constants) for i in range(spec.module_count)), spec)


# ------------------------------------------------------------------ worst cell


def cell_retention(
    cells: np.ndarray,
    constants: Optional[ModelConstants] = None,
    timing: TimingSet = STANDARD_TIMINGS,
    temperature: float = WORST_CASE_TEMPERATURE,
    step: float = 8.0,
    max_interval: float = 512.0,
) -> np.ndarray:
    """Per-cell largest refresh-step multiple passing both reads and writes under ``timing``."""
    constants = constants or ModelConstants()
    prm = kernels.pack_constants(constants)
    flat = np.asarray(cells, dtype=np.float64).reshape(-1, 3)
    cols = tuple(np.ascontiguousarray(flat[:, k]) for k in range(3))
    t = (timing.t_rcd, timing.t_ras, timing.t_wr, timing.t_rp)
    nmax = int(max_interval // step)
    out = None
    for kind in (AccessKind.READ, AccessKind.WRITE):
        r = kernels.retention(cols, t, temperature, kernels.kind_code(kind), step, nmax, prm)
        out = r if out is None else np.minimum(out, r)
    return out


def worst_cell(scope: Scope, constants: Optional[ModelConstants] = None, **kwargs) -> CellParameters:
    """Cell with the smallest retention in ``scope``.

    Ties on the (step-quantised) retention go to the leakier cell, then lower
    capacity, then slower fill, then position. This is a total order, so the
    worst cell of a module is the worst of its chips' worst cells.
    """
    flat = scope.cell_array().reshape(-1, 3)
    ret = cell_retention(flat, constants, **kwargs)
    order = np.lexsort((np.arange(len(flat)), -flat[:, FILL], flat[:, CAPACITY], flat[:, LEAK], ret))
    return CellParameters(*map(float, flat[order[0]]))
