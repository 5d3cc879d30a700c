import csv
import io
import warnings
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from oracles import naive_chain_run, naive_logical_run
from retrylab.logical import construct_seed, failure_bounds
from retrylab.model import RetryLoopChain
from retrylab.simulator import (
    DegenerateTimingWarning,
    SimConfig,
    SimulationError,
    as_fraction,
    default_offsets,
    detect_steady_state,
    fail_histogram,
    inject_thread,
    run_logical,
    run_multi_loop,
    run_until_steady,
)

offsets_st = st.lists(st.integers(0, 400), min_size=2, max_size=6, unique=True)


@settings(max_examples=150, deadline=None)
@given(offsets_st, st.integers(0, 6), st.integers(1, 11))
def test_logical_engine_matches_naive_oracle(raw, q, rn):
    P = len(raw)
    r = F(rn, 12)
    offsets = [F(x, 40) for x in raw]
    until = F(30 + 4 * q)
    cfg = SimConfig.logical(P, q, r, offsets, horizon=until)
    trace = run_logical(cfg, record_events=False)
    got = [(s.thread, trace.time(s.start), s.fails) for s in trace.successes]
    assert got == naive_logical_run(P, q, r, offsets, until)


def test_single_thread_never_fails():
    trace = run_logical(SimConfig.logical(1, 2, F(1, 2), horizon=50))
    assert all(s.fails == 0 for s in trace.successes)
    st_ = detect_steady_state(trace)
    assert st_.detected and st_.period == F(7, 2) and st_.failures_f == 0


def test_r_zero_warns():
    with pytest.warns(DegenerateTimingWarning):
        run_logical(SimConfig.logical(2, 1, 0, horizon=20))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig.logical(0, 0, F(1, 2))
    with pytest.raises(ValueError):
        SimConfig.logical(2, 0, F(3, 2))
    with pytest.raises(ValueError):
        SimConfig.logical(2, -1, F(1, 2))
    with pytest.raises(ValueError):
        SimConfig.logical(2, 0, F(1, 2), init_offsets=[0])
    with pytest.raises(ValueError):
        SimConfig(2, mode="quantum")
    with pytest.raises(ValueError):
        SimConfig(2, mode="hardware")
    with pytest.raises(ValueError):
        SimConfig.logical(2, 0, F(1, 2), horizon=0)


def test_as_fraction_and_default_offsets():
    assert as_fraction("3/8") == F(3, 8)
    assert as_fraction(2) == F(2)
    assert as_fraction(0.25) == F(1, 4)
    offs = default_offsets(4)
    assert offs[0] == 0 and len(set(offs)) == 4 and max(offs) < F(1, 16)
    assert fail_histogram([0, 1, 1, 6, 9]) == {
        "0": 1, "1": 2, "2": 0, "3": 0, "4": 0, "5": 0, "6+": 2,
    }


def test_horizon_before_first_success():
    with pytest.raises(SimulationError):
        run_logical(SimConfig.logical(2, 0, F(1, 2), [F(5), F(6)], horizon=1))


def test_steady_state_from_constructed_seed():
    P, q, r = 5, 4, F(3, 8)
    lo, hi = failure_bounds(P, q, r)
    assert hi > lo
    for f in (lo, hi):
        trace, steady = run_until_steady(SimConfig.from_seed(construct_seed(P, q, r, f)))
        assert steady.detected
        assert steady.failures_f == f
        assert steady.period == q + r + 1 + f
        assert steady.throughput == P / steady.period
        assert steady.occupancy == P * (f + 1) / steady.period


def test_detect_rejects_wrong_period():
    P, q, r = 3, 1, F(1, 2)
    trace = run_logical(SimConfig.from_seed(construct_seed(P, q, r, 1)))
    assert detect_steady_state(trace, q, r).detected
    assert not detect_steady_state(trace, q, r + F(1, 8)).detected


def test_run_until_steady_grows_horizon():
    cfg = SimConfig.logical(4, 2, F(1, 3), horizon=2)
    trace, steady = run_until_steady(cfg)
    assert steady.detected
    assert trace.time(trace.horizon) > 2


def test_logical_csv_keeps_exact_times():
    trace = run_logical(SimConfig.logical(2, 0, F(1, 3), horizon=4))
    buf = io.StringIO()
    trace.to_csv(buf)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert set(rows[0]) == {"thread", "event", "time_num", "time_den"}
    times = [F(int(r["time_num"]), int(r["time_den"])) for r in rows]
    assert times == sorted(times)
    commits = [t for r, t in zip(rows, times) if r["event"] == "cas_commit_success"]
    assert commits == [trace.time(s.commit) for s in trace.successes]


def test_csv_needs_events():
    trace = run_logical(SimConfig.logical(2, 0, F(1, 3), horizon=4), record_events=False)
    with pytest.raises(ValueError):
        trace.to_csv(io.StringIO())


def test_injection_first_success_and_new_steady_state():
    P, q, r, f = 3, 2, F(1, 4), 0
    cfg = SimConfig.from_seed(construct_seed(P, q, r, f))
    period = q + r + 1 + f
    res = inject_thread(cfg, period / 3)
    assert res.base.failures_f == f
    assert res.steady.detected
    assert res.steady.thread_count_P == P + 1
    lo, hi = failure_bounds(P + 1, q, r)
    assert lo <= res.steady.failures_f <= hi
    assert res.injected_at < res.first_success <= res.injected_at + 10 * period
    assert res.trace.injected_at is not None


chain_stage = st.tuples(st.integers(0, 30), st.integers(2, 20)).map(
    lambda t: (F(t[0], 4), F(t[1], 4))
)


@settings(max_examples=60, deadline=None)
@given(st.lists(chain_stage, min_size=2, max_size=3), offsets_st)
def test_multi_loop_matches_naive_chain(stages, raw):
    P = len(raw)
    offsets = [F(x, 20) for x in raw]
    horizon = F(40) * sum(pw + rl for pw, rl in stages)
    chain = RetryLoopChain(tuple(stages))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateTimingWarning)
        res = run_multi_loop(SimConfig.logical(P, 0, 0, offsets, horizon, multi_loop=chain))
    rotated = stages[res.rotation:] + stages[: res.rotation]
    fails, laps = naive_chain_run(rotated, P, offsets, horizon)
    assert sum(fails) == sum(res.stage_fails)
    assert [fails[(k - res.rotation) % len(stages)] for k in range(len(stages))] == res.stage_fails
    # only the longest loop fails
    longest = max(rl for _, rl in stages)
    assert all(n == 0 for k, n in enumerate(res.stage_fails) if stages[k][1] != longest)


def test_multi_loop_needs_chain():
    with pytest.raises(ValueError):
        run_multi_loop(SimConfig.logical(2, 0, F(1, 2)))
