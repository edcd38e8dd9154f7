"""Array kernels over many cells at once.

Each public function has a numba implementation and a numpy implementation
evaluating the same per-cell formulas as :func:`dramslack.device.access_outcome`.
The backend is picked at import time from ``DRAMSLACK_DISABLE_NUMBA`` and can be
switched with :func:`set_backend` (the benchmark and the tests do this).

Cells are passed as three contiguous float64 arrays: capacity, fill time
constant (ns) and leakage time constant at the reference temperature (ms).
"""
from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit
from .device import AccessKind, ModelConstants

READ, WRITE = 0, 1

# layout of the packed constants vector
_QMIN, _SENSE, _PRE, _DOUBLING, _TREF, _TFNOM, _SEXP, _WDRIVE, _SHARE, _PSAT = range(10)

_backend = "numba" if _accel.USE_NUMBA else "numpy"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


def get_backend() -> str:
    return _backend


def pack_constants(constants: ModelConstants) -> np.ndarray:
    c = constants
    return np.array(
        [
            c.min_correct_charge,
            c.sense_base_time,
            c.precharge_base_time,
            c.temperature_doubling_interval,
            c.reference_temperature,
            c.nominal_fill_time_constant,
            c.sense_exponent,
            c.write_drive_ratio,
            c.read_restore_start,
            c.precharge_saturation,
        ],
        dtype=np.float64,
    )


def kind_code(kind) -> int:
    return READ if AccessKind(kind) is AccessKind.READ else WRITE


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _leak_factor(tl, temperature, elapsed, prm):
    tau = tl * 2.0 ** (-(temperature - prm[_TREF]) / prm[_DOUBLING])
    return math.exp(-elapsed / tau)


@njit(cache=True)
def _sense_time(cap, tf, charge, prm):
    u = (charge * cap - prm[_QMIN]) / (1.0 - prm[_QMIN])
    if u <= 0.0:
        return math.inf
    return prm[_SENSE] * (tf / prm[_TFNOM]) * u ** (-prm[_SEXP])


@njit(cache=True)
def _precharge_req(cap, tf, hold, c0, sense, ras, wr, kind, prm):
    """Required tRP for one cell, +inf when restoration itself fails."""
    if kind == 0:
        d = ras - sense
        start = prm[_SHARE] * c0
    else:
        d = wr / prm[_WDRIVE]
        start = 0.0
    if not d >= 0.0:
        return math.inf
    restored = 1.0 - (1.0 - start) * math.exp(-d / tf)
    if restored > 1.0:
        restored = 1.0
    elif restored < 0.0:
        restored = 0.0
    # the restored charge must still be above the floor after another refresh period
    if restored * hold * cap <= prm[_QMIN]:
        return math.inf
    u = (restored * cap - prm[_QMIN]) / (1.0 - prm[_QMIN]) / prm[_PSAT]
    if u > 1.0:
        u = 1.0
    return prm[_PRE] * (1.0 - 0.5 * u)


@njit(cache=True)
def _pass_mask_nb(cap, tf, tl, rcd, ras, wr, rp, temperature, elapsed, kind, prm, noise, sigma):
    n = cap.shape[0]
    out = np.empty(n, dtype=np.bool_)
    use_noise = noise.shape[0] == n and sigma > 0.0
    for i in range(n):
        hold = _leak_factor(tl[i], temperature, elapsed, prm)
        c0 = hold
        if use_noise:
            c0 = c0 + noise[i] * sigma
            if c0 > 1.0:
                c0 = 1.0
            elif c0 < 0.0:
                c0 = 0.0
        s = _sense_time(cap[i], tf[i], c0, prm)
        if not rcd >= s:
            out[i] = False
            continue
        req = _precharge_req(cap[i], tf[i], hold, c0, s, ras, wr, kind, prm)
        out[i] = rp >= req
    return out


@njit(cache=True)
def _retention_nb(cap, tf, tl, rcd, ras, wr, rp, temperature, kind, step, nmax, prm):
    n = cap.shape[0]
    out = np.zeros(n)
    for i in range(n):
        last = 0.0
        for k in range(1, nmax + 1):
            t = k * step
            hold = _leak_factor(tl[i], temperature, t, prm)
            s = _sense_time(cap[i], tf[i], hold, prm)
            if not rcd >= s:
                break
            req = _precharge_req(cap[i], tf[i], hold, hold, s, ras, wr, kind, prm)
            if not rp >= req:
                break
            last = t
        out[i] = last
    return out


@njit(cache=True)
def _requirements_nb(cap, tf, tl, temperature, elapsed, kind, mids, prm):
    """Worst-cell tRCD requirement and, per restoration value, worst-cell tRP requirement."""
    n = cap.shape[0]
    m = mids.shape[0]
    max_sense = -math.inf
    max_req = np.full(m, -math.inf)
    for i in range(n):
        hold = _leak_factor(tl[i], temperature, elapsed, prm)
        s = _sense_time(cap[i], tf[i], hold, prm)
        if s > max_sense:
            max_sense = s
        for j in range(m):
            if kind == 0:
                r = _precharge_req(cap[i], tf[i], hold, hold, s, mids[j], 0.0, kind, prm)
            else:
                r = _precharge_req(cap[i], tf[i], hold, hold, s, 0.0, mids[j], kind, prm)
            if r > max_req[j]:
                max_req[j] = r
    return max_sense, max_req


# ---------------------------------------------------------------- numpy path


def _leak_factor_np(tl, temperature, elapsed, prm):
    tau = tl * 2.0 ** (-(temperature - prm[_TREF]) / prm[_DOUBLING])
    return np.exp(-elapsed / tau)


def _sense_time_np(cap, tf, charge, prm):
    u = (charge * cap - prm[_QMIN]) / (1.0 - prm[_QMIN])
    ok = u > 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = prm[_SENSE] * (tf / prm[_TFNOM]) * np.where(ok, u, 1.0) ** (-prm[_SEXP])
    return np.where(ok, s, np.inf)


def _precharge_req_np(cap, tf, hold, c0, sense, ras, wr, kind, prm):
    if kind == READ:
        d = ras - sense
        start = prm[_SHARE] * c0
    else:
        d = np.broadcast_to(np.float64(wr) / prm[_WDRIVE], np.shape(sense))
        start = 0.0
    ok = d >= 0.0
    with np.errstate(invalid="ignore", over="ignore"):
        restored = np.clip(1.0 - (1.0 - start) * np.exp(-np.where(ok, d, 0.0) / tf), 0.0, 1.0)
    ok &= restored * hold * cap > prm[_QMIN]
    u = (restored * cap - prm[_QMIN]) / (1.0 - prm[_QMIN]) / prm[_PSAT]
    req = prm[_PRE] * (1.0 - 0.5 * np.minimum(u, 1.0))
    return np.where(ok, req, np.inf)


def _pass_mask_np(cap, tf, tl, rcd, ras, wr, rp, temperature, elapsed, kind, prm, noise, sigma):
    hold = _leak_factor_np(tl, temperature, elapsed, prm)
    c0 = hold
    if noise.shape[0] == cap.shape[0] and sigma > 0.0:
        c0 = np.clip(hold + noise * sigma, 0.0, 1.0)
    s = _sense_time_np(cap, tf, c0, prm)
    req = _precharge_req_np(cap, tf, hold, c0, s, ras, wr, kind, prm)
    return (rcd >= s) & (rp >= req)


def _retention_np(cap, tf, tl, rcd, ras, wr, rp, temperature, kind, step, nmax, prm):
    out = np.zeros(cap.shape[0])
    alive = np.ones(cap.shape[0], dtype=bool)
    empty = np.empty(0)
    for k in range(1, nmax + 1):
        t = k * step
        ok = alive & _pass_mask_np(cap, tf, tl, rcd, ras, wr, rp, temperature, t, kind, prm, empty, 0.0)
        out[ok] = t
        alive = ok
        if not alive.any():
            break
    return out


def _requirements_np(cap, tf, tl, temperature, elapsed, kind, mids, prm):
    hold = _leak_factor_np(tl, temperature, elapsed, prm)
    s = _sense_time_np(cap, tf, hold, prm)
    max_req = np.empty(mids.shape[0])
    for j, mid in enumerate(mids):
        if kind == READ:
            r = _precharge_req_np(cap, tf, hold, hold, s, mid, 0.0, kind, prm)
        else:
            r = _precharge_req_np(cap, tf, hold, hold, s, 0.0, mid, kind, prm)
        max_req[j] = r.max() if r.size else -np.inf
    return (s.max() if s.size else -np.inf), max_req


# ---------------------------------------------------------------- dispatch


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def pass_mask(cells, timing, temperature, elapsed, kind, prm, noise=None, sigma=0.0):
    """Per-cell success flags for one access. ``timing`` is (rcd, ras, wr, rp)."""
    cap, tf, tl = (_f64(a) for a in cells)
    rcd, ras, wr, rp = (float(x) for x in timing)
    noise = np.empty(0) if noise is None else _f64(noise)
    fn = _pass_mask_nb if _backend == "numba" else _pass_mask_np
    return fn(cap, tf, tl, rcd, ras, wr, rp, float(temperature), float(elapsed), int(kind), prm, noise, float(sigma))


def retention(cells, timing, temperature, kind, step, nmax, prm):
    """Per-cell largest multiple of ``step`` (up to ``nmax`` steps) that passes; 0 if none."""
    cap, tf, tl = (_f64(a) for a in cells)
    rcd, ras, wr, rp = (float(x) for x in timing)
    fn = _retention_nb if _backend == "numba" else _retention_np
    return fn(cap, tf, tl, rcd, ras, wr, rp, float(temperature), int(kind), float(step), int(nmax), prm)


def requirements(cells, temperature, elapsed, kind, mids, prm):
    """Return (max sense time, max tRP requirement per restoration value) over the cells."""
    cap, tf, tl = (_f64(a) for a in cells)
    fn = _requirements_nb if _backend == "numba" else _requirements_np
    s, req = fn(cap, tf, tl, float(temperature), float(elapsed), int(kind), _f64(mids), prm)
    return float(s), np.asarray(req)


def grid_mask(cells, temperature, elapsed, kind, rcd_values, mid_values, rp_values, prm):
    """Error-free flags over a (tRCD, tRAS-or-tWR, tRP) grid.

    A point is error-free iff every cell passes, i.e. tRCD covers the largest
    sense time and tRP covers the largest precharge requirement at that tRAS/tWR.
    """
    max_sense, max_req = requirements(cells, temperature, elapsed, kind, mid_values, prm)
    rcd_ok = np.asarray(rcd_values, dtype=np.float64) >= max_sense
    rp_ok = np.asarray(rp_values, dtype=np.float64)[None, :] >= max_req[:, None]
    return rcd_ok[:, None, None] & rp_ok[None, :, :]
