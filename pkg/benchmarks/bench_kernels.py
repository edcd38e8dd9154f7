"""Time the numba and numpy kernel backends on the same inputs.

Usage: python benchmarks/bench_kernels.py [--cells N] [--repeats R]

Each kernel is warmed up once (numba compiles on first call), then timed over
``repeats`` runs; the best time is reported. Outputs are checked for equality.
"""
import argparse
import time

import numpy as np

from dramslack import _accel, kernels
from dramslack.device import ModelConstants
from dramslack.population import PopulationSpec, generate_module
from dramslack.profiler import TimingGrid


def best_time(fn, repeats):
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(cells, prm, noise):
    g = TimingGrid()
    rcd, ras, rp = np.array(g.t_rcd), np.array(g.t_ras), np.array(g.t_rp)
    std = (13.75, 35.0, 15.0, 13.75)
    return {
        "pass_mask": lambda: kernels.pass_mask(cells, std, 85.0, 64.0, 0, prm, noise, 0.005),
        "retention": lambda: kernels.retention(cells, std, 85.0, 0, 8.0, 64, prm),
        "grid_mask": lambda: kernels.grid_mask(cells, 55.0, 200.0, 0, rcd, ras, rp, prm),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)

    constants = ModelConstants()
    prm = kernels.pack_constants(constants)
    per_module = PopulationSpec().cells_per_module
    modules = max(1, -(-args.cells // per_module))
    spec = PopulationSpec(module_count=modules + 2)
    flat = np.concatenate([generate_module(spec, i + 1, constants).cell_array() for i in range(modules)])[: args.cells]
    cells = tuple(np.ascontiguousarray(flat[:, k]) for k in range(3))
    noise = np.random.default_rng(0).standard_normal(len(flat))

    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    old = kernels.get_backend()
    results, outputs = {}, {}
    try:
        for b in backends:
            kernels.set_backend(b)
            for name, fn in workloads(cells, prm, noise).items():
                results[(name, b)] = best_time(fn, args.repeats)
                outputs[(name, b)] = fn()
    finally:
        kernels.set_backend(old)

    print(f"cells={len(flat)} repeats={args.repeats}")
    print(f"{'kernel':<12}{'numpy s':>12}{'numba s':>12}{'speedup':>10}  same")
    for name in ("pass_mask", "retention", "grid_mask"):
        t_np = results[(name, "numpy")]
        if "numba" in backends:
            t_nb = results[(name, "numba")]
            same = all(np.array_equal(a, b) for a, b in zip(
                np.atleast_1d(outputs[(name, "numpy")]), np.atleast_1d(outputs[(name, "numba")])))
            print(f"{name:<12}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {same}")
        else:
            print(f"{name:<12}{t_np:>12.4f}{'-':>12}{'-':>10}  -")


if __name__ == "__main__":
    main()
