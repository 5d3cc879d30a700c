"""Measurement harness for the instrumented structures.

Workers are pinned threads running the retry-loop procedure: spin for the
parallel work, perform one operation on the shared structure, repeat until
the wall-clock budget for the grid point runs out.  Cycles are derived from
``perf_counter_ns`` and the nominal core frequency.

CPython serializes bytecode under the interpreter lock, so measured
contention reflects lock hand-offs as much as cache-line traffic; rows are
honest measurements of this harness, not of native CAS hardware.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import re
import statistics
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .estimator import estimate, recommend_backoff
from .model import PlatformProfile, WorkloadSpec
from .structures import STRUCTURES, AtomicRef, PoolExhausted, make_structure

log = logging.getLogger(__name__)

CSV_HEADER = (
    "pw_cycles,threads,structure,strategy,thr_meas_per_ms,fails_per_success,"
    "f0,f1,f2,f3,f4,f5,f6plus,thr_low_model,thr_high_model,thr_avg_model,rc,cc,rep,seed"
).split(",")

ENV_CPUSET = "RETRYLAB_CPUSET"
ENV_DURATION = "RETRYLAB_DURATION_MS"
DEFAULT_DURATION_MS = 200
DEFAULT_REPS = 3
DEFAULT_GHZ = 3.4


class HardwareUnavailable(RuntimeError):
    """The host cannot run the requested measurement (cores, pinning)."""


# --------------------------------------------------------------------------
# host inspection


def parse_cpuset(text: str) -> list[int]:
    """``"0-3,6"`` -> ``[0, 1, 2, 3, 6]``."""
    cpus: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            cpus.extend(range(int(a), int(b) + 1))
        else:
            cpus.append(int(part))
    if not cpus:
        raise ValueError(f"empty cpu set {text!r}")
    return sorted(set(cpus))


def available_cpus() -> list[int]:
    env = os.environ.get(ENV_CPUSET)
    if env:
        return parse_cpuset(env)
    return sorted(os.sched_getaffinity(0))


def _cpuinfo() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            return fh.read()
    except OSError:
        return ""


def nominal_ghz() -> float:
    m = re.search(r"cpu MHz\s*:\s*([\d.]+)", _cpuinfo())
    return float(m.group(1)) / 1000 if m else DEFAULT_GHZ


def is_virtualized() -> bool:
    return bool(re.search(r"^flags\s*:.*\bhypervisor\b", _cpuinfo(), re.M))


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=os.path.dirname(__file__),
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def duration_ms_default() -> int:
    env = os.environ.get(ENV_DURATION)
    return int(env) if env else DEFAULT_DURATION_MS


def pin_current_thread(cpu: int) -> None:
    try:
        os.sched_setaffinity(0, {cpu})
    except (OSError, AttributeError) as exc:
        raise HardwareUnavailable(f"cannot pin to cpu {cpu}: {exc}") from exc


# --------------------------------------------------------------------------
# parallel work


class Spinner:
    """Busy loop calibrated once so that ``spin(c)`` burns about c cycles."""

    def __init__(self, ghz: float | None = None, calib_iters: int = 200_000):
        self.ghz = ghz or nominal_ghz()
        t0 = time.perf_counter_ns()
        self._loop(calib_iters)
        ns = max(time.perf_counter_ns() - t0, 1)
        self.cycles_per_iter = ns * self.ghz / calib_iters

    @staticmethod
    def _loop(n: int) -> None:
        for _ in range(n):
            pass

    def iterations(self, cycles: float) -> int:
        return max(0, int(round(cycles / self.cycles_per_iter)))

    def spin(self, cycles: float) -> None:
        self._loop(self.iterations(cycles))


# --------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class Calibration:
    rc: float
    cc: float
    rc_iqr: float
    cc_iqr: float
    rounds: int
    mode: str
    ghz: float
    virtualized: bool
    warnings: tuple[str, ...] = ()

    def profile(self, P: int = 1) -> PlatformProfile:
        return PlatformProfile(self.rc, self.cc, P)

    def as_dict(self) -> dict:
        return {
            "rc": self.rc,
            "cc": self.cc,
            "rc_iqr": self.rc_iqr,
            "cc_iqr": self.cc_iqr,
            "rounds": self.rounds,
            "mode": self.mode,
            "ghz": self.ghz,
            "virtualized": self.virtualized,
            "warnings": list(self.warnings),
        }


def _median_iqr(samples: Sequence[float]) -> tuple[float, float]:
    q1, med, q3 = np.percentile(np.asarray(samples, dtype=float), [25, 50, 75])
    return float(med), float(q3 - q1)


def _timer_overhead_ns(n: int = 2000) -> float:
    t = time.perf_counter_ns
    samples = []
    for _ in range(n):
        a = t()
        b = t()
        samples.append(b - a)
    return float(np.median(samples))


def calibrate(rounds: int = 1000, mode: str = "bounce", ghz: float | None = None) -> Calibration:
    """Measure Read and CAS latencies on a contended cell, in cycles.

    ``bounce`` pins two threads to distinct cpus and alternates ownership of
    the cell before each timed access, so every Read and CAS starts from a
    line last written by the other thread.  ``local`` times the same
    accesses from one thread and needs a single cpu.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if mode not in ("bounce", "local"):
        raise ValueError(f"unknown calibration mode {mode!r}")
    ghz = ghz or nominal_ghz()
    notes = []
    virt = is_virtualized()
    if virt:
        notes.append("hypervisor detected: timer resolution and latencies are suspect")
    overhead = _timer_overhead_ns()
    cell = AtomicRef(0)
    reads: list[float] = []
    cases: list[float] = []
    t = time.perf_counter_ns

    def timed_pair():
        a = t()
        v = cell.load()
        b = t()
        cell.compare_and_set(v, v + 1)
        c = t()
        reads.append(max(b - a - overhead, 0) * ghz)
        cases.append(max(c - b - overhead, 0) * ghz)

    if mode == "local":
        for _ in range(rounds):
            timed_pair()
    else:
        cpus = available_cpus()
        if len(cpus) < 2:
            raise HardwareUnavailable(
                f"bounce calibration needs 2 cpus, have {cpus}; use mode='local'"
            )
        turn = AtomicRef(0)
        errors: list[Exception] = []

        def peer():
            try:
                pin_current_thread(cpus[1])
                for _ in range(rounds):
                    while turn.load() != 1:
                        pass
                    v = cell.load()
                    cell.compare_and_set(v, v + 1)
                    turn.compare_and_set(1, 0)
            except Exception as exc:  # surfaced below
                errors.append(exc)
                turn.compare_and_set(1, 0)

        saved = os.sched_getaffinity(0)
        pin_current_thread(cpus[0])
        th = threading.Thread(target=peer, daemon=True)
        th.start()
        try:
            for _ in range(rounds):
                turn.compare_and_set(0, 1)
                while turn.load() != 0:
                    pass
                timed_pair()
        finally:
            os.sched_setaffinity(0, saved)
        th.join(timeout=30)
        if errors:
            raise HardwareUnavailable(str(errors[0]))
    rc, rc_iqr = _median_iqr(reads)
    cc, cc_iqr = _median_iqr(cases)
    # the model needs a positive read latency
    rc = max(rc, 1.0)
    return Calibration(rc, cc, rc_iqr, cc_iqr, rounds, mode, ghz, virt, tuple(notes))


# --------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class Strategy:
    kind: str = "none"  # none | linear | exponential | model
    param: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        m = re.fullmatch(r"\s*(none|model|linear|exponential)\s*(?:\(\s*([\d.]+)\s*\))?\s*", text)
        if not m:
            raise ValueError(f"bad strategy {text!r}; expected none, model, linear(N) or exponential(N)")
        kind, param = m.group(1), m.group(2)
        if kind in ("linear", "exponential") and param is None:
            raise ValueError(f"strategy {kind} needs a parameter, e.g. {kind}(115)")
        return cls(kind, float(param) if param else 0.0)

    def label(self) -> str:
        if self.kind in ("linear", "exponential"):
            return f"{self.kind}({self.param:g})"
        return self.kind

    def delay_after_fail(self, consecutive: int) -> float:
        """Cycles to wait after the ``consecutive``-th failure in a row."""
        if self.kind == "linear":
            return self.param * consecutive
        if self.kind == "exponential":
            return self.param * (2 ** (consecutive - 1))
        return 0.0


@dataclass
class _WorkerResult:
    successes: int = 0
    attempts: int = 0
    fail_runs: list[int] = field(default_factory=lambda: [0] * 7)
    error: str | None = None


def _operation(structure, kind: str, pop_k: int):
    if kind == "counter":
        return structure.increment
    if kind == "stack":
        def stack_op():
            for _ in range(pop_k):
                structure.push(0)
            structure.pop_multi(pop_k)
        return stack_op
    if kind == "queue":
        def queue_op():
            structure.enqueue(0)
            structure.dequeue()
        return queue_op
    raise ValueError(f"unknown structure {kind!r}")


def _run_point(
    kind: str,
    P: int,
    pw: float,
    strategy: Strategy,
    pad: float,
    duration_ms: int,
    cpus: Sequence[int],
    spinner: Spinner,
    seed: int,
    poisson: bool,
    pop_k: int,
) -> tuple[list[_WorkerResult], float, object]:
    capacity = 1 << 17
    structure = make_structure(kind, capacity=capacity)
    op = _operation(structure, kind, pop_k)
    if strategy.kind in ("linear", "exponential") and strategy.param > 0:
        structure.on_fail = lambda n: spinner.spin(strategy.delay_after_fail(n))
    stop = threading.Event()
    start_gate = threading.Barrier(P + 1)
    results = [_WorkerResult() for _ in range(P)]
    rng_root = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in rng_root.spawn(P)]

    def worker(i: int):
        res = results[i]
        try:
            pin_current_thread(cpus[i % len(cpus)])
        except HardwareUnavailable as exc:
            res.error = str(exc)
        rng = rngs[i]
        start_gate.wait()
        try:
            while not stop.is_set():
                work = rng.poisson(pw) if poisson else pw
                spinner.spin(work + pad)
                op()
        except PoolExhausted:
            stop.set()

    threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(P)]
    for th in threads:
        th.start()
    start_gate.wait()
    t0 = time.perf_counter()
    stop.wait(duration_ms / 1000)
    stop.set()
    elapsed = time.perf_counter() - t0
    for th in threads:
        th.join(timeout=max(5.0, 10 * duration_ms / 1000))
        if th.is_alive():
            for r in results:
                r.error = r.error or "worker timed out"
    for c in structure.counters.per_thread():
        # counters are per OS thread; fold them into one aggregate slot
        results[0].successes += c.successes
        results[0].attempts += c.attempts
        results[0].fail_runs = [a + b for a, b in zip(results[0].fail_runs, c.fail_runs)]
    return results, elapsed, structure


def measure_harness_overhead(
    structure_kind: str,
    profile: PlatformProfile,
    spinner: Spinner,
    duration_ms: int = 50,
    cw: float = 0.0,
    pop_k: int = 1,
) -> float:
    """Cycles per operation that neither rc, cw nor cc account for.

    Measured with one worker and no parallel work; the bench adds it to the
    parallel section of every model prediction.
    """
    cpus = available_cpus()
    results, elapsed, _ = _run_point(
        structure_kind, 1, 0.0, Strategy(), 0.0, duration_ms, cpus, spinner, 0, False, pop_k
    )
    n = results[0].successes
    if n == 0:
        raise RuntimeError("overhead probe completed no operation")
    per_op = elapsed * 1e9 * spinner.ghz / n
    return max(0.0, per_op - (profile.rc + cw + profile.cc))


def run_bench(
    structure_kind: str,
    profile: PlatformProfile,
    pw_grid: Iterable[float],
    P: int,
    strategy: Strategy | str = "none",
    duration_ms: int | None = None,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    pw_distribution: str = "constant",
    cw: float = 0.0,
    pop_k: int = 1,
    ghz: float | None = None,
    overhead_cycles: float | None = None,
) -> list[dict]:
    """Measure one structure over a pw grid; returns CSV-ready rows.

    One row per repetition plus a ``rep="median"`` row per grid point.
    Model columns use ``pw + overhead_cycles`` (probed when not given); the
    value used is attached to every row as ``overhead_cycles``.
    Failing points are kept with ``thr_meas_per_ms`` empty and the reason in
    ``error`` (written as a comment line by :func:`write_csv`).
    """
    if structure_kind not in STRUCTURES:
        raise ValueError(f"unknown structure {structure_kind!r}")
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    duration_ms = duration_ms_default() if duration_ms is None else duration_ms
    cpus = available_cpus()
    if P > len(cpus):
        raise HardwareUnavailable(f"{P} workers need {P} cpus, only {cpus} available")
    spinner = Spinner(ghz)
    cycles_per_ms = spinner.ghz * 1e6
    prof = profile.with_threads(P)
    grid = list(pw_grid)
    template = WorkloadSpec(0.0, cw)
    if overhead_cycles is None:
        overhead_cycles = measure_harness_overhead(
            structure_kind, prof, spinner, min(duration_ms, 50), cw, pop_k
        )
    rec = None
    if strategy.kind == "model":
        rec = recommend_backoff(prof, template, _backoff_search_grid(prof, template))
    rows = []
    for pw in grid:
        model = estimate(prof, template.with_pw(pw + overhead_cycles))
        # the harness overhead already sits in the parallel section
        pad = max(0.0, rec.backoff_for(pw + overhead_cycles)) if rec is not None else 0.0
        per_rep = []
        for rep in range(reps):
            row = {
                "pw_cycles": pw,
                "threads": P,
                "structure": structure_kind,
                "strategy": strategy.label(),
                "thr_low_model": model.thr_low * cycles_per_ms,
                "thr_high_model": model.thr_high * cycles_per_ms,
                "thr_avg_model": model.thr_avg * cycles_per_ms,
                "rc": prof.rc,
                "cc": prof.cc,
                "rep": rep,
                "seed": seed + rep,
                "overhead_cycles": overhead_cycles,
            }
            try:
                results, elapsed, _ = _run_point(
                    structure_kind, P, pw, strategy, pad, duration_ms, cpus, spinner,
                    seed + rep, pw_distribution == "poisson", pop_k,
                )
                agg = results[0]
                errs = [r.error for r in results if r.error]
                if agg.successes == 0:
                    raise RuntimeError("no successful operation in the window")
                row.update(
                    thr_meas_per_ms=agg.successes / (elapsed * 1000),
                    fails_per_success=(agg.attempts - agg.successes) / agg.successes,
                    **_hist_columns(agg.fail_runs),
                )
                if errs:
                    row["error"] = "; ".join(sorted(set(errs)))
                per_rep.append(row)
            except (HardwareUnavailable, RuntimeError) as exc:
                row.update(thr_meas_per_ms="", fails_per_success="", error=str(exc))
                row.update({k: "" for k in _HIST})
            rows.append(row)
        if per_rep:
            med = dict(per_rep[0])
            for key in ("thr_meas_per_ms", "fails_per_success", *_HIST):
                med[key] = statistics.median(r[key] for r in per_rep)
            med["rep"] = "median"
            med.pop("error", None)
            rows.append(med)
    return rows


_HIST = ("f0", "f1", "f2", "f3", "f4", "f5", "f6plus")


def _hist_columns(fail_runs: Sequence[int]) -> dict:
    return dict(zip(_HIST, fail_runs))


def _backoff_search_grid(profile: PlatformProfile, template: WorkloadSpec) -> list[float]:
    rlw = profile.rc + template.cw + profile.cc
    top = (2 * profile.P + 1) * rlw
    step = max(rlw / 16, 1.0)
    return list(np.arange(0.0, top + step / 2, step))


def write_csv(rows: Sequence[dict], fh=None, build: str | None = None) -> str:
    """Serialize rows with the fixed header; errors become trailing comments."""
    out = fh if fh is not None else io.StringIO()
    out.write(f"# build={build or build_id()}\n")
    if rows and "overhead_cycles" in rows[0]:
        out.write(f"# harness_overhead_cycles={rows[0]['overhead_cycles']:.1f}\n")
    w = csv.DictWriter(out, fieldnames=CSV_HEADER, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    errors = []
    for row in rows:
        w.writerow({k: _fmt(row.get(k, "")) for k in CSV_HEADER})
        if row.get("error"):
            errors.append(f"# error pw={row['pw_cycles']} rep={row['rep']}: {row['error']}\n")
    for line in errors:
        out.write(line)
    return out.getvalue() if fh is None else ""


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v
