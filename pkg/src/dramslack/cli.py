"""Command-line entry point: generate -> profile -> simulate -> report.

Every stage reads the run config given by ``--config`` and writes fixed file
names under ``--out`` (default: the config's ``output_dir``).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .config import RunConfig
from .controller import (
    TimingTable,
    generate_trace,
    simulate_trace,
    temperatures_to_csv,
    trace_to_csv,
)
from .device import AccessKind, OperatingPoint, TimingSet
from .population import Population, generate
from .profiler import (
    KINDS,
    PARAMETERS,
    one_step_below,
    profile_fleet,
    refresh_latency_tradeoff,
    repeatability_analysis,
    summarize_fleet,
)

POPULATION_FILE = "population.json"
PROFILES_FILE = "profiles.json"
FLEET_JSON = "fleet_summary.json"
FLEET_CSV = "fleet_summary.csv"
MINIMAL_CSV = "minimal_sets.csv"
SWEEPS_CSV = "sweeps.csv"
RETENTION_CSV = "retention.csv"
TRADEOFF_CSV = "tradeoff.csv"
REPEATABILITY_JSON = "repeatability.json"
TABLES_JSON = "tables.json"
TRACE_CSV = "trace.csv"
TEMPERATURES_CSV = "temperatures.csv"
TRACE_REPORT_JSON = "trace_report.json"
TRACE_REPORT_CSV = "trace_report.csv"
REQUESTS_CSV = "requests.csv"
REPORT_TXT = "report.txt"

TIMING_COLUMNS = [
    "module_id", "temperature", "kind", "t_rcd", "t_ras", "t_wr", "t_rp",
    "refresh_interval", "latency_sum", "error_free",
]


class StageError(RuntimeError):
    """A stage could not run (missing input, bad config)."""


def _timing_row(module_id, temperature, kind: AccessKind, t: TimingSet, ok: bool) -> list:
    return [module_id, temperature, kind.value, t.t_rcd, t.t_ras, t.t_wr, t.t_rp, t.refresh_interval,
            t.latency_sum(kind), ok]


def _read(path: Path, what: str) -> str:
    if not path.is_file():
        raise StageError(f"missing {what}: {path} (run the earlier stage first)")
    return path.read_text(encoding="utf-8")


# ------------------------------------------------------------------ stages


def cmd_generate(cfg: RunConfig, out: Path) -> dict:
    pop = generate(cfg.population, cfg.constants)
    formats.write_text(out / POPULATION_FILE, pop.to_json() + "\n")
    cells = np.concatenate([m.cell_array() for m in pop.modules])
    stats = {
        "modules": len(pop),
        "chips": len(pop) * cfg.population.chips_per_module,
        "sampled_cells": int(cells.shape[0]),
        "charge_capacity": {"mean": cells[:, 0].mean(), "min": cells[:, 0].min()},
        "fill_time_constant_ns": {"mean": cells[:, 1].mean(), "max": cells[:, 1].max()},
        "leakage_time_constant_ref_ms": {"mean": cells[:, 2].mean(), "min": cells[:, 2].min()},
    }
    print(formats.dumps(stats), end="")
    return stats


def cmd_profile(cfg: RunConfig, out: Path, workers: int = 1) -> dict:
    pop = Population.from_json(_read(out / POPULATION_FILE, "population file"))
    profiles = profile_fleet(pop, cfg.grid, cfg.bins if cfg.bins else (55.0, 85.0), cfg.constants, cfg.standard, workers)
    summary = summarize_fleet(profiles)

    formats.write_text(out / PROFILES_FILE, formats.dumps([p.to_dict() for p in profiles]))
    formats.write_text(out / FLEET_JSON, formats.dumps(summary.to_dict()))
    temps = sorted(summary.read_latency_sum_reduction)
    formats.write_text(
        out / FLEET_CSV,
        formats.csv_text(
            ["temperature", *PARAMETERS, "read_latency_sum", "write_latency_sum"],
            [[t, *(summary.per_parameter_mean_reduction[t][p] for p in PARAMETERS),
              summary.read_latency_sum_reduction[t], summary.write_latency_sum_reduction[t]] for t in temps],
        ),
    )
    rows = []
    for p in profiles:
        for t in temps:
            for k in KINDS:
                rows.append(_timing_row(p.module_id, t, k, p.minimal_set(t, k), True))
    formats.write_text(out / MINIMAL_CSV, formats.csv_text(TIMING_COLUMNS, rows))

    # full grids only for the two anchor modules; the fleet-wide grid would be ~400k rows
    rows = []
    for p in (profiles[0], profiles[-1]) if len(profiles) > 1 else profiles[:1]:
        for (t, k), res in sorted(p.sweeps.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            rows.extend(_timing_row(p.module_id, t, k, ts, ok) for ts, ok in res.points())
    formats.write_text(out / SWEEPS_CSV, formats.csv_text(TIMING_COLUMNS, rows))

    rows = []
    for p in profiles:
        for k in KINDS:
            r = p.retention[k]
            for (chip, bank), v in np.ndenumerate(r.per_bank):
                rows.append([p.module_id, k.value, chip, bank, v, r.per_chip[chip], r.module_level])
    formats.write_text(
        out / RETENTION_CSV,
        formats.csv_text(["module_id", "kind", "chip", "bank", "bank_ms", "chip_ms", "module_ms"], rows),
    )

    rep_module, rep = pop.modules[0], profiles[0]
    rows = []
    for k in KINDS:
        for temp in temps:
            for interval, total in refresh_latency_tradeoff(
                rep_module, cfg.profile.tradeoff_intervals, OperatingPoint(temp), k, cfg.grid, cfg.constants, cfg.standard
            ):
                rows.append([rep.module_id, temp, k.value, interval, "" if total is None else total])
    formats.write_text(
        out / TRADEOFF_CSV,
        formats.csv_text(["module_id", "temperature", "kind", "refresh_interval", "min_latency_sum"], rows),
    )

    repeat = {}
    for temp in temps:
        best = rep.minimal_set(temp, AccessKind.READ)
        try:
            reduced = one_step_below(best, cfg.grid, "t_rcd")
        except ValueError:
            repeat[f"{temp:g}"] = {"skipped": "minimal tRCD is at the bottom of the grid"}
            continue
        res = repeatability_analysis(
            rep_module, reduced, OperatingPoint(temp), cfg.profile.repeatability_iterations,
            cfg.constants.noise_sigma, AccessKind.READ, cfg.constants, cfg.profile.repeatability_seed,
        )
        repeat[f"{temp:g}"] = {
            "timing": reduced.to_dict(),
            "failed_any": res.failed_any,
            "failed_all": res.failed_all,
            "iterations": res.iterations,
            "fraction": res.fraction,
            "no_failures": res.no_failures,
        }
    formats.write_text(out / REPEATABILITY_JSON, formats.dumps(repeat))
    print(formats.dumps(summary.to_dict()), end="")
    return summary.to_dict()


def _tables_from_profiles(doc: list, cfg: RunConfig) -> list[tuple[int, TimingTable]]:
    out = []
    for p in doc:
        entries = []
        for b in sorted(cfg.bins):
            key = f"{b:g}"
            if key not in p["combined_sets"]:
                raise StageError(f"module {p['module_id']}: bin {key} C was not profiled")
            entries.append((b, TimingSet.from_dict(p["combined_sets"][key])))
        out.append((int(p["module_id"]), TimingTable(tuple(entries), cfg.standard)))
    return out


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    doc = json.loads(_read(out / PROFILES_FILE, "profiles file"))
    tables = _tables_from_profiles(doc, cfg)
    ts = cfg.trace
    trace = generate_trace(ts.mix, ts.read_fraction, ts.length, ts.seed)
    series = [OperatingPoint(ts.temperature)]
    formats.write_text(out / TRACE_CSV, trace_to_csv(trace))
    formats.write_text(out / TEMPERATURES_CSV, temperatures_to_csv(series))
    formats.write_text(out / TABLES_JSON, formats.dumps({str(mid): t.to_dict() for mid, t in tables}))

    reports, rows = {}, []
    for mid, table in tables:
        rep = simulate_trace(trace, table, series, cfg.latency)
        reports[str(mid)] = rep.to_dict()
        rows.append([mid, rep.baseline_mean_ns, rep.adaptive_mean_ns, rep.speedup])
        if mid == tables[0][0]:
            first = rep
    speedups = [r[3] for r in rows]
    result = {
        "trace": ts.to_dict(),
        "latency_constants": cfg.latency.to_dict(),
        "modules": reports,
        "mean_speedup": float(np.mean(speedups)),
        "min_speedup": float(np.min(speedups)),
        "max_speedup": float(np.max(speedups)),
    }
    formats.write_text(out / TRACE_REPORT_JSON, formats.dumps(result))
    formats.write_text(
        out / TRACE_REPORT_CSV,
        formats.csv_text(["module_id", "baseline_mean_ns", "adaptive_mean_ns", "speedup"], rows),
    )
    formats.write_text(
        out / REQUESTS_CSV,
        formats.csv_text(
            ["index", "kind", "locality", "baseline_ns", "adaptive_ns"],
            ([i, r.kind.value, r.locality.value, b, a]
             for i, (r, b, a) in enumerate(zip(trace, first.baseline_latencies, first.adaptive_latencies))),
        ),
    )
    print(formats.dumps({k: result[k] for k in ("mean_speedup", "min_speedup", "max_speedup")}), end="")
    return result


def cmd_report(cfg: RunConfig, out: Path) -> str:
    profiles = json.loads(_read(out / PROFILES_FILE, "profiles file"))
    fleet = json.loads(_read(out / FLEET_JSON, "fleet summary"))
    trace = json.loads(_read(out / TRACE_REPORT_JSON, "trace report"))
    rep, worst = profiles[0], profiles[-1]
    lines = ["dramslack run report", ""]
    for label, p in (("representative module", rep), ("worst-case module", worst)):
        lines.append(f"{label} (id {p['module_id']})")
        lines.append(
            "  retention at 85 C: read {} ms, write {} ms; safe refresh {} / {} ms".format(
                formats.fmt(p["retention"]["read"]["module_level"]),
                formats.fmt(p["retention"]["write"]["module_level"]),
                formats.fmt(p["safe_refresh_read"]),
                formats.fmt(p["safe_refresh_write"]),
            )
        )
        for t, red in sorted(p["latency_sum_reduction"].items(), key=lambda kv: float(kv[0])):
            lines.append(
                f"  {t} C latency-sum reduction: read {formats.fmt(red['read'])}%, write {formats.fmt(red['write'])}%"
            )
        lines.append("")
    lines.append(f"fleet of {fleet['module_count']} modules, mean reductions (%)")
    lines.append("  temp  " + "  ".join(f"{p:>8}" for p in (*PARAMETERS, "read", "write")))
    for t in sorted(fleet["per_parameter_mean_reduction"], key=float):
        pp = fleet["per_parameter_mean_reduction"][t]
        cells = [pp[p] for p in PARAMETERS]
        cells += [fleet["read_latency_sum_reduction"][t], fleet["write_latency_sum_reduction"][t]]
        lines.append(f"  {t:>4}  " + "  ".join(f"{formats.fmt(v):>8}" for v in cells))
    lines.append("")
    lines.append(
        "trace at {} C: mean speedup {} (min {}, max {})".format(
            formats.fmt(trace["trace"]["temperature"]),
            formats.fmt(trace["mean_speedup"]),
            formats.fmt(trace["min_speedup"]),
            formats.fmt(trace["max_speedup"]),
        )
    )
    text = "\n".join(lines) + "\n"
    formats.write_text(out / REPORT_TXT, text)
    print(text, end="")
    return text


# ------------------------------------------------------------------ parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dramslack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("print-default-config", help="print the default run config as JSON")
    for name, text in (
        ("generate", "write the synthetic fleet"),
        ("profile", "profile every module and summarise the fleet"),
        ("simulate", "build timing tables and run the trace model"),
        ("report", "write a plain-text summary of a finished run"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="run config (JSON)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: config output_dir)")
        p.add_argument("--workers", type=int, default=1, help="worker processes for profiling")
        p.add_argument("--seed", type=int, default=None, help="override the population seed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "print-default-config":
        sys.stdout.write(RunConfig().dumps())
        return 0
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except (OSError, ValueError, TypeError) as exc:
        print(f"dramslack: invalid config: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("dramslack: --workers must be >= 1", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path(cfg.output_dir)
    try:
        if args.command == "generate":
            cmd_generate(cfg, out)
        elif args.command == "profile":
            cmd_profile(cfg, out, args.workers)
        elif args.command == "simulate":
            cmd_simulate(cfg, out)
        else:
            cmd_report(cfg, out)
    except (StageError, OSError, ValueError) as exc:
        print(f"dramslack {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
