"""Array kernels against the scalar model, and numba against numpy."""
import numpy as np
import pytest

from dramslack import _accel, kernels
from dramslack.device import (
    AccessKind,
    CellParameters,
    ModelConstants,
    OperatingPoint,
    Outcome,
    TimingSet,
    access_outcome,
)

C = ModelConstants()
PRM = kernels.pack_constants(C)
BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    old = kernels.get_backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


def random_cells(rng, n):
    # wide enough to cover failing and passing cells at every temperature
    cap = rng.uniform(0.3, 1.0, n)
    tf = rng.uniform(2.0, 40.0, n)
    tl = np.exp(rng.uniform(np.log(50.0), np.log(1e5), n))
    return cap, tf, tl


def random_timing(rng):
    rcd = rng.uniform(2.0, 16.0)
    return (rcd, rng.uniform(max(rcd, 15.0), 40.0), rng.uniform(2.0, 20.0), rng.uniform(3.0, 17.0))


def test_pass_mask_matches_access_outcome(backend):
    rng = np.random.default_rng(1)
    cells = random_cells(rng, 400)
    for _ in range(25):
        timing = random_timing(rng)
        temp = rng.uniform(20.0, 95.0)
        elapsed = rng.uniform(0.0, 400.0)
        for kind in AccessKind:
            got = kernels.pass_mask(cells, timing, temp, elapsed, kernels.kind_code(kind), PRM)
            ts = TimingSet(*timing, refresh_interval=max(elapsed, 1.0))
            want = [
                access_outcome(CellParameters(*p), ts, OperatingPoint(temp), elapsed, kind, C) is Outcome.SUCCESS
                for p in zip(*cells)
            ]
            assert got.tolist() == want


def test_noisy_pass_mask_matches_access_outcome(backend):
    rng = np.random.default_rng(2)
    cells = random_cells(rng, 300)
    noise = rng.standard_normal(300)
    c = ModelConstants(noise_sigma=0.05)
    prm = kernels.pack_constants(c)
    timing = (9.0, 30.0, 12.0, 11.0)
    ts = TimingSet(*timing, refresh_interval=200.0)
    for kind in AccessKind:
        got = kernels.pass_mask(cells, timing, 70.0, 150.0, kernels.kind_code(kind), prm, noise, c.noise_sigma)
        want = [
            access_outcome(CellParameters(*p), ts, OperatingPoint(70.0), 150.0, kind, c, noise_draw=z) is Outcome.SUCCESS
            for p, z in zip(zip(*cells), noise)
        ]
        assert got.tolist() == want


def test_retention_matches_scalar_sweep(backend):
    rng = np.random.default_rng(3)
    cells = random_cells(rng, 60)
    timing = (13.75, 35.0, 15.0, 13.75)
    for kind in AccessKind:
        got = kernels.retention(cells, timing, 85.0, kernels.kind_code(kind), 8.0, 64, PRM)
        for i, p in enumerate(zip(*cells)):
            cell = CellParameters(*p)
            last = 0.0
            for k in range(1, 65):
                t = 8.0 * k
                ok = access_outcome(cell, TimingSet(*timing, refresh_interval=t), OperatingPoint(85.0), t, kind, C)
                if ok is not Outcome.SUCCESS:
                    break
                last = t
            assert got[i] == last


def test_grid_mask_matches_pointwise(backend):
    rng = np.random.default_rng(4)
    cells = random_cells(rng, 200)
    rcd = np.arange(5.0, 15.01, 1.25)
    ras = np.arange(17.5, 37.51, 2.5)
    wr = np.arange(5.0, 17.51, 1.25)
    rp = np.arange(5.0, 15.01, 1.25)
    for kind, mids in ((0, ras), (1, wr)):
        mask = kernels.grid_mask(cells, 60.0, 100.0, kind, rcd, mids, rp, PRM)
        for i, a in enumerate(rcd):
            for j, m in enumerate(mids):
                for k, c in enumerate(rp):
                    t = (a, m, 15.0, c) if kind == 0 else (a, 35.0, m, c)
                    assert mask[i, j, k] == kernels.pass_mask(cells, t, 60.0, 100.0, kind, PRM).all()


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree_bitwise():
    rng = np.random.default_rng(5)
    cells = random_cells(rng, 5000)
    noise = rng.standard_normal(5000)
    mids = np.arange(17.5, 37.51, 2.5)
    out = {}
    old = kernels.get_backend()
    try:
        for name in ("numba", "numpy"):
            kernels.set_backend(name)
            out[name] = (
                kernels.pass_mask(cells, (10.0, 30.0, 12.5, 11.25), 85.0, 120.0, 0, PRM, noise, 0.01),
                kernels.retention(cells, (13.75, 35.0, 15.0, 13.75), 85.0, 1, 8.0, 64, PRM),
                kernels.requirements(cells, 55.0, 152.0, 0, mids, PRM),
            )
    finally:
        kernels.set_backend(old)
    a, b = out["numba"], out["numpy"]
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert a[2][0] == b[2][0]
    np.testing.assert_array_equal(a[2][1], b[2][1])


def test_set_backend_validation():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")


def test_env_flag_parsing(monkeypatch):
    for value, disabled in (("1", True), ("true", True), ("YES", True), ("0", False), ("", False)):
        monkeypatch.setenv("DRAMSLACK_DISABLE_NUMBA", value)
        assert _accel._env_disabled() is disabled
