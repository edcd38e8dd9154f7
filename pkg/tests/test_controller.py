import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dramslack.controller import (
    LOCALITIES,
    LatencyModelConstants,
    Locality,
    MemoryRequest,
    TimingTable,
    TraceSpec,
    generate_trace,
    request_latency,
    scaled_timings,
    select_timings,
    simulate_trace,
    temperatures_from_csv,
    temperatures_to_csv,
    trace_from_csv,
    trace_to_csv,
)
from dramslack.device import STANDARD_TIMINGS, AccessKind, OperatingPoint, TimingSet

PAPER_REDUCTIONS = {"t_rcd": 0.27, "t_ras": 0.32, "t_wr": 0.33, "t_rp": 0.18}
ADAPTIVE = scaled_timings(STANDARD_TIMINGS, PAPER_REDUCTIONS)
COLD = TimingSet(10.0, 25.0, 10.0, 11.25, 64.0)
WARM = TimingSet(11.25, 27.5, 11.25, 12.5, 64.0)
TABLE = TimingTable(((55.0, COLD), (85.0, WARM)), STANDARD_TIMINGS)

R, W = AccessKind.READ, AccessKind.WRITE
HIT, MISS, CONF = Locality.ROW_HIT, Locality.ROW_MISS, Locality.ROW_CONFLICT


class TestSelect:
    def test_round_up(self):
        assert select_timings(TABLE, OperatingPoint(40.0)) == COLD
        assert select_timings(TABLE, OperatingPoint(55.0)) == COLD
        assert select_timings(TABLE, OperatingPoint(60.0)) == WARM

    def test_fallback_above_range(self):
        assert select_timings(TABLE, OperatingPoint(90.0)) == STANDARD_TIMINGS

    def test_empty_table_is_fallback(self):
        assert select_timings(TimingTable(), OperatingPoint(20.0)) == STANDARD_TIMINGS

    def test_bounds_must_ascend(self):
        with pytest.raises(ValueError):
            TimingTable(((85.0, WARM), (55.0, COLD)))

    @given(st.floats(0.0, 100.0))
    def test_never_colder_than_current(self, temp):
        bounds = dict((id(t), b) for b, t in TABLE.entries)
        chosen = select_timings(TABLE, OperatingPoint(temp))
        if chosen is not TABLE.fallback:
            assert bounds[id(chosen)] >= temp

    def test_round_trip(self):
        assert TimingTable.from_dict(TABLE.to_dict()) == TABLE


class TestLatency:
    def test_row_hit_is_tcl(self):
        assert request_latency(MemoryRequest(R, HIT), COLD) == 13.75
        assert request_latency(MemoryRequest(W, HIT), COLD) == 11.25

    def test_conflict_read_standard(self):
        assert request_latency(MemoryRequest(R, CONF), STANDARD_TIMINGS) == pytest.approx(41.25)

    def test_conflict_read_reduced(self):
        # hand sum 10.0375 + 11.275 + 13.75, a 15% cut from 41.25
        t = scaled_timings(STANDARD_TIMINGS, {"t_rcd": 0.27, "t_rp": 0.18})
        assert request_latency(MemoryRequest(R, CONF), t) == pytest.approx(35.0625)

    def test_write_paths(self):
        t = STANDARD_TIMINGS
        assert request_latency(MemoryRequest(W, MISS), t) == t.t_rcd + 11.25
        assert request_latency(MemoryRequest(W, CONF), t) == t.t_wr + t.t_rp + t.t_rcd + 11.25

    def test_custom_constants(self):
        c = LatencyModelConstants(t_cl=10.0, t_cwl=8.0)
        assert request_latency(MemoryRequest(R, MISS), STANDARD_TIMINGS, c) == 23.75


class TestSimulate:
    def test_all_hits_speedup_one(self):
        trace = [MemoryRequest(R, HIT)] * 50 + [MemoryRequest(W, HIT)] * 50
        rep = simulate_trace(trace, TABLE, [OperatingPoint(55.0)])
        assert rep.speedup == 1.0

    def test_conflict_closed_form(self):
        table = TimingTable(((55.0, ADAPTIVE),), STANDARD_TIMINGS)
        rep = simulate_trace([MemoryRequest(R, CONF)] * 1000, table, [OperatingPoint(55.0)])
        s = STANDARD_TIMINGS
        want = (0.27 * s.t_rcd + 0.18 * s.t_rp) / (s.t_rp + s.t_rcd + 13.75)
        assert abs(rep.mean_latency_reduction - want) < 1e-9
        assert want == pytest.approx(0.15, abs=1e-3)

    def test_hot_series_uses_fallback(self):
        trace = generate_trace((0.2, 0.3, 0.5), 0.6, 2000, 3)
        rep = simulate_trace(trace, TABLE, [OperatingPoint(90.0)])
        np.testing.assert_array_equal(rep.baseline_latencies, rep.adaptive_latencies)

    def test_per_request_series(self):
        trace = [MemoryRequest(R, MISS)] * 3
        series = [OperatingPoint(40.0), OperatingPoint(70.0), OperatingPoint(95.0)]
        rep = simulate_trace(trace, TABLE, series)
        assert rep.adaptive_latencies.tolist() == [COLD.t_rcd + 13.75, WARM.t_rcd + 13.75, 13.75 + 13.75]

    def test_vectorised_matches_scalar(self):
        trace = generate_trace((0.3, 0.3, 0.4), 0.5, 3000, 11)
        rep = simulate_trace(trace, TABLE, [OperatingPoint(50.0)])
        want = [request_latency(r, COLD) for r in trace]
        assert rep.adaptive_latencies.tolist() == want

    def test_series_length_checked(self):
        with pytest.raises(ValueError):
            simulate_trace([MemoryRequest(R, HIT)] * 3, TABLE, [OperatingPoint(50.0)] * 2)
        with pytest.raises(ValueError):
            simulate_trace([], TABLE, [OperatingPoint(50.0)])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariant_and_speedup(self, seed):
        trace = generate_trace((0.3, 0.3, 0.4), 0.5, 500, seed)
        rng = np.random.default_rng(seed)
        perm = [trace[i] for i in rng.permutation(len(trace))]
        a = simulate_trace(trace, TABLE, [OperatingPoint(50.0)])
        b = simulate_trace(perm, TABLE, [OperatingPoint(50.0)])
        assert a.adaptive_mean_ns == b.adaptive_mean_ns
        assert a.speedup >= 1.0


class TestTrace:
    def test_all_hits(self):
        assert {r.locality for r in generate_trace((1.0, 0.0, 0.0), 0.5, 500, 1)} == {HIT}

    def test_same_seed_same_trace(self):
        assert generate_trace((0.5, 0.3, 0.2), 0.7, 1000, 9) == generate_trace((0.5, 0.3, 0.2), 0.7, 1000, 9)

    def test_multinomial_concentration(self):
        n = 100_000
        trace = generate_trace((0.5, 0.3, 0.2), 0.7, n, 2024)
        counts = {loc: 0 for loc in LOCALITIES}
        for r in trace:
            counts[r.locality] += 1
        for loc, p in zip(LOCALITIES, (0.5, 0.3, 0.2)):
            assert abs(counts[loc] / n - p) < 0.01
        reads = sum(r.kind is R for r in trace) / n
        assert abs(reads - 0.7) < 0.01

    @pytest.mark.parametrize("mix", [(0.5, 0.5, 0.5), (1.2, -0.2, 0.0), (0.5, 0.5)])
    def test_invalid_mix(self, mix):
        with pytest.raises(ValueError):
            generate_trace(mix, 0.5, 10, 0)

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            generate_trace((1.0, 0.0, 0.0), 0.5, 0, 0)

    def test_csv_round_trip(self):
        trace = generate_trace((0.2, 0.3, 0.5), 0.5, 200, 5)
        assert trace_from_csv(trace_to_csv(trace)) == trace
        series = [OperatingPoint(t) for t in (40.0, 55.5, 85.0)]
        assert temperatures_from_csv(temperatures_to_csv(series)) == series

    def test_trace_spec_round_trip(self):
        spec = TraceSpec(mix=(0.1, 0.2, 0.7), read_fraction=0.4, length=10, seed=3, temperature=60.0)
        assert TraceSpec.from_dict(spec.to_dict()) == spec
