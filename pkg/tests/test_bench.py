import csv
import io

import pytest

from retrylab import bench
from retrylab.bench import (
    CSV_HEADER,
    HardwareUnavailable,
    Spinner,
    Strategy,
    available_cpus,
    calibrate,
    parse_cpuset,
    run_bench,
    write_csv,
)
from retrylab.model import PlatformProfile

PROFILE = PlatformProfile(50, 50, 1)


def test_parse_cpuset():
    assert parse_cpuset("0-3,6") == [0, 1, 2, 3, 6]
    assert parse_cpuset(" 2, 1,2 ") == [1, 2]
    with pytest.raises(ValueError):
        parse_cpuset(",")


def test_cpuset_env_override(monkeypatch):
    monkeypatch.setenv(bench.ENV_CPUSET, "4-5")
    assert available_cpus() == [4, 5]


def test_strategy_parse_and_delays():
    assert Strategy.parse("none") == Strategy()
    assert Strategy.parse("model").kind == "model"
    lin = Strategy.parse("linear(115)")
    assert lin.label() == "linear(115)"
    assert [lin.delay_after_fail(n) for n in (1, 2, 3)] == [115, 230, 345]
    exp = Strategy.parse(" exponential( 10 ) ")
    assert [exp.delay_after_fail(n) for n in (1, 2, 3)] == [10, 20, 40]
    assert Strategy().delay_after_fail(5) == 0
    for bad in ("linear", "random(3)", "exponential(-1)"):
        with pytest.raises(ValueError):
            Strategy.parse(bad)


def test_spinner_scales_with_cycles():
    sp = Spinner(ghz=2.0, calib_iters=20_000)
    assert sp.iterations(0) == 0
    assert sp.iterations(10_000) > sp.iterations(1_000) > 0


def test_calibrate_local():
    cal = calibrate(rounds=200, mode="local")
    assert cal.rc >= 1 and cal.cc >= 0
    assert cal.mode == "local" and cal.rounds == 200
    assert cal.profile(4) == PlatformProfile(cal.rc, cal.cc, 4)
    assert set(cal.as_dict()) >= {"rc", "cc", "rc_iqr", "cc_iqr", "virtualized", "warnings"}


def test_calibrate_validation():
    with pytest.raises(ValueError):
        calibrate(rounds=0)
    with pytest.raises(ValueError):
        calibrate(mode="wild")


@pytest.mark.skipif(len(available_cpus()) >= 2, reason="host has a second cpu")
def test_bounce_calibration_refuses_on_one_cpu():
    with pytest.raises(HardwareUnavailable):
        calibrate(rounds=10)


@pytest.mark.hardware
@pytest.mark.skipif(len(available_cpus()) < 2, reason="needs two cpus")
def test_bounce_calibration_restores_affinity():
    import os

    before = os.sched_getaffinity(0)
    calibrate(rounds=50)
    assert os.sched_getaffinity(0) == before


def test_bench_refuses_more_workers_than_cpus():
    P = len(available_cpus()) + 1
    with pytest.raises(HardwareUnavailable):
        run_bench("counter", PROFILE, [0], P, duration_ms=5, reps=1)


@pytest.mark.parametrize("kind", ["counter", "stack", "queue"])
def test_single_worker_rows(kind):
    rows = run_bench(kind, PROFILE, [0, 40_000], 1, duration_ms=20, reps=2, overhead_cycles=0)
    assert [r["rep"] for r in rows] == [0, 1, "median", 0, 1, "median"]
    for r in rows:
        assert r["thr_meas_per_ms"] > 0
        assert r["fails_per_success"] == 0  # one worker never conflicts
        assert r["thr_low_model"] == r["thr_high_model"]
        assert r["f0"] > 0 and r["f1"] == 0
    # more parallel work, fewer operations
    med = [r for r in rows if r["rep"] == "median"]
    assert med[1]["thr_meas_per_ms"] < med[0]["thr_meas_per_ms"]


def test_model_strategy_and_bad_inputs():
    rows = run_bench("counter", PROFILE, [0], 1, "model", duration_ms=10, reps=1, overhead_cycles=0)
    assert rows[0]["strategy"] == "model"
    with pytest.raises(ValueError):
        run_bench("heap", PROFILE, [0], 1)
    with pytest.raises(ValueError):
        run_bench("counter", PROFILE, [0], 1, reps=0)


def test_write_csv_layout():
    rows = run_bench("counter", PROFILE, [0], 1, duration_ms=10, reps=1, overhead_cycles=12.5)
    rows.append(dict(rows[0], rep=1, thr_meas_per_ms="", error="worker died"))
    text = write_csv(rows, build="abc123")
    lines = text.splitlines()
    assert lines[0] == "# build=abc123"
    assert lines[1] == "# harness_overhead_cycles=12.5"
    assert lines[2].split(",") == CSV_HEADER
    assert lines[-1] == "# error pw=0 rep=1: worker died"
    body = [l for l in lines if not l.startswith("#")]
    parsed = list(csv.DictReader(io.StringIO("\n".join(body))))
    assert [p["rep"] for p in parsed] == ["0", "median", "1"]
    assert parsed[0]["structure"] == "counter"
