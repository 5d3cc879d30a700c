import csv
import io
from fractions import Fraction as F

import pytest

from retrylab.model import PlatformProfile, WorkloadSpec
from retrylab.simulator import HARDWARE, SimConfig, SimulationError, run_hardware


def hw(P, pw, cw=0, record_events=False, **kw):
    cfg = SimConfig.hardware(PlatformProfile(50, 50, P), WorkloadSpec(pw, cw), **kw)
    return run_hardware(cfg, record_events)


def test_single_thread_is_exact():
    trace = hw(1, 300, 20, horizon=100_000)
    cycle = 300 + 50 + 20 + 50
    assert all(s.fails == 0 for s in trace.successes)
    assert [s.commit for s in trace.successes[:3]] == [cycle, 2 * cycle, 3 * cycle]
    assert set(trace.cas_waits) == {0} and set(trace.read_stalls) == {0}
    n = len(trace.successes) - 1
    # commits land on multiples of the cycle; windows are half-open
    assert trace.throughput(1, n * cycle + 1) == F(1, cycle)
    assert trace.occupancy(0, n * cycle) == pytest.approx(120 / cycle, rel=1e-3)


def test_uncontended_threads_never_fail():
    # spaced one retry apart with a long parallel section: pure pipelining
    P = 4
    trace = hw(P, 5000, horizon=2_000_000)
    assert all(s.fails == 0 for s in trace.successes)
    assert max(trace.cas_waits) == 0
    assert trace.throughput(20_000) == pytest.approx(P / 5100, rel=0.005)


def test_saturated_line_bounds_throughput():
    # at most one success per cc cycles: the line is granted serially
    trace = hw(8, 0, horizon=200_000)
    assert float(trace.throughput(20_000)) <= 1 / 50
    assert len(trace.cas_waits) > len(trace.successes)
    assert max(trace.cas_waits) > 0


def test_zero_parallel_work_convoy():
    # the winner re-reads unstalled and keeps winning; the failed CASes
    # queue behind it so one success costs P line transfers
    P = 8
    trace = hw(P, 0, horizon=200_000)
    late = trace.window(100_000)
    assert {s.thread for s in late} == {0}
    assert trace.throughput(100_000) == pytest.approx(1 / (P * 50), rel=0.01)


def test_cas_serialization_and_read_stall():
    # two threads reading at the same cycle collide on the CAS
    trace = hw(2, 0, spawn_spacing=0, horizon=1000, record_events=True)
    first, second = trace.cas_times[:2], trace.cas_waits[:2]
    assert first == [50, 50]
    assert second == [0, 50]
    assert trace.successes[0].commit == 100 and trace.successes[0].thread == 0
    # the loser's CAS fails: the line changed after its Read
    assert (1, "cas_fail", 150) in trace.events


def test_deterministic_given_seed():
    a = hw(4, 200, pw_sampler="poisson", rng_seed=9, horizon=50_000)
    b = hw(4, 200, pw_sampler="poisson", rng_seed=9, horizon=50_000)
    c = hw(4, 200, pw_sampler="poisson", rng_seed=10, horizon=50_000)
    assert [s.commit for s in a.successes] == [s.commit for s in b.successes]
    assert [s.commit for s in a.successes] != [s.commit for s in c.successes]


def test_backoff_pad_equals_longer_parallel_section():
    a = hw(4, 100, backoff_pad=250, horizon=80_000)
    b = hw(4, 350, horizon=80_000)
    assert [s.commit for s in a.successes] == [s.commit for s in b.successes]
    assert a.header["backoff_pad"] == 250


def test_header_and_spawn_default():
    trace = hw(3, 10, 40, horizon=5000)
    assert trace.mode == HARDWARE
    assert trace.header["spawn_spacing"] == 140
    assert trace.header["pw_sampler"] == "constant"


def test_fail_histogram_and_windows():
    trace = hw(8, 100, horizon=100_000)
    hist = trace.fail_histogram()
    assert sum(hist.values()) == len(trace.successes)
    assert trace.window(50_000) == [
        s for s in trace.successes if 50_000 <= s.commit < trace.horizon
    ]


def test_hardware_csv_has_cycles():
    trace = hw(2, 10, horizon=600, record_events=True)
    buf = io.StringIO()
    trace.to_csv(buf)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert list(rows[0]) == ["thread", "event", "cycle"]
    assert rows[0] == {"thread": "0", "event": "parallel_start", "cycle": "0"}
    cycles = [int(r["cycle"]) for r in rows]
    assert cycles == sorted(cycles)


def test_errors():
    with pytest.raises(SimulationError):
        hw(1, 10_000, horizon=100)
    with pytest.raises(ValueError):
        run_hardware(SimConfig.logical(2, 0, F(1, 2)))
    with pytest.raises(ValueError):
        SimConfig.hardware(PlatformProfile(50, 50, 2), WorkloadSpec(0, 0), pw_sampler="gamma")
