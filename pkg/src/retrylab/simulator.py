"""Deterministic discrete-event simulation of retry-loop threads.

Two timing models are provided.

*Logical* mode is the abstract model of the cyclic-execution theory: a retry
lasts exactly one unit, the parallel section ``q + r`` units, and an attempt
that reads at ``t`` and commits at ``t + 1`` fails iff another thread's
successful CAS commits in ``(t, t + 1]`` (a commit at the very same instant
belongs to whichever thread has the lower index).  Times are exact
rationals; internally they are scaled to integer ticks over a common
denominator, which keeps the arithmetic exact and fast.

*Hardware* mode works in integer cycles and models line ownership: a CAS
holds the line exclusively for ``cc`` cycles, concurrent CAS requests queue
in arrival order, and a Read issued while a CAS holds the line stalls until
that CAS releases it (CASes still waiting in the queue do not stall it).  A
Read issued right after a failed CAS is served locally and never stalls.
Threads spawn one minimum retry apart unless configured otherwise.
"""

from __future__ import annotations

import bisect
import csv
import dataclasses
import heapq
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational, Real
from typing import Iterable, Sequence

import numpy as np

from .logical import SeedConfiguration
from .model import PlatformProfile, RetryLoopChain, WorkloadSpec, reduce_chain

LOGICAL = "logical"
HARDWARE = "hardware"

PARALLEL_START = "parallel_start"
RETRY_START = "retry_start"
CAS_FAIL = "cas_fail"
CAS_SUCCESS = "cas_commit_success"

HISTOGRAM_KEYS = ("0", "1", "2", "3", "4", "5", "6+")


class DegenerateTimingWarning(UserWarning):
    """r = 0: commits can coincide and the lowest-index tie rule decides."""


class SimulationError(RuntimeError):
    """The horizon ran out before the configuration produced a success."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(1 << 20)
    return Fraction(x)


def default_offsets(P: int) -> tuple[Fraction, ...]:
    """Spawn delays ``i / (64 P)``: almost simultaneous, never tied."""
    eps = Fraction(1, 64 * P)
    return tuple(i * eps for i in range(P))


@dataclass(frozen=True)
class SimConfig:
    """Everything a simulation run depends on.

    Logical mode reads ``q``, ``r``, ``init_offsets`` (first try of each
    thread) and optionally ``multi_loop``; hardware mode reads ``profile``,
    ``workload``, ``pw_sampler``, ``rng_seed``, ``backoff_pad`` and
    ``spawn_spacing``.  ``horizon`` is in retry units (logical) or cycles
    (hardware).  Hardware threads spawn ``spawn_spacing`` cycles apart,
    one minimum retry by default.
    """

    thread_count_P: int
    mode: str = LOGICAL
    q: int = 0
    r: Fraction = Fraction(0)
    init_offsets: tuple[Fraction, ...] | None = None
    profile: PlatformProfile | None = None
    workload: WorkloadSpec | None = None
    pw_sampler: str = "constant"
    rng_seed: int = 0
    horizon: Real = 1000
    multi_loop: RetryLoopChain | None = None
    backoff_pad: int = 0
    spawn_spacing: int | None = None

    def __post_init__(self):
        if self.thread_count_P < 1:
            raise ValueError("need at least one thread")
        if self.mode not in (LOGICAL, HARDWARE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if self.mode == LOGICAL:
            object.__setattr__(self, "r", as_fraction(self.r))
            object.__setattr__(self, "horizon", as_fraction(self.horizon))
            if self.multi_loop is None:
                if int(self.q) != self.q or self.q < 0:
                    raise ValueError(f"q must be a non-negative integer, got {self.q}")
                if not 0 <= self.r < 1:
                    raise ValueError(f"r must lie in [0, 1), got {self.r}")
            offsets = self.init_offsets
            if offsets is None:
                offsets = default_offsets(self.thread_count_P)
            offsets = tuple(as_fraction(o) for o in offsets)
            if len(offsets) != self.thread_count_P:
                raise ValueError("one init offset per thread is required")
            object.__setattr__(self, "init_offsets", offsets)
        else:
            if self.profile is None or self.workload is None:
                raise ValueError("hardware mode needs a profile and a workload")
            if self.pw_sampler not in ("constant", "poisson"):
                raise ValueError(f"unknown pw sampler {self.pw_sampler!r}")

    @classmethod
    def logical(cls, P, q, r, init_offsets=None, horizon=None, multi_loop=None):
        r = as_fraction(r)
        if horizon is None:
            horizon = default_logical_horizon(P, q, r)
        return cls(P, LOGICAL, q, r, init_offsets, horizon=horizon, multi_loop=multi_loop)

    @classmethod
    def from_seed(cls, seed: SeedConfiguration, horizon=None):
        return cls.logical(seed.P, seed.q, seed.r, seed.success_starts, horizon)

    @classmethod
    def hardware(
        cls,
        profile: PlatformProfile,
        workload: WorkloadSpec,
        horizon: int = 200_000,
        pw_sampler: str = "constant",
        rng_seed: int = 0,
        backoff_pad: int = 0,
        spawn_spacing: int | None = None,
    ):
        return cls(
            profile.P,
            HARDWARE,
            profile=profile,
            workload=workload,
            pw_sampler=pw_sampler,
            rng_seed=rng_seed,
            horizon=horizon,
            backoff_pad=backoff_pad,
            spawn_spacing=spawn_spacing,
        )


def default_logical_horizon(P: int, q: int, r) -> Fraction:
    # long enough for the transient plus several detection windows
    return Fraction(40 + 8 * P) * (q + 1 + P + 1)


@dataclass
class SuccessRecord:
    thread: int
    start: int
    commit: int
    fails: int
    stage: int = 0


@dataclass
class SimTrace:
    """Result of one run.  Times are integer ticks; ``tick`` is their length.

    Logical runs have ``tick = 1/D`` retry units, hardware runs ``tick = 1``
    cycle.  ``successes`` is in commit order.
    """

    mode: str
    thread_count_P: int
    tick: Fraction
    horizon: int
    successes: list[SuccessRecord]
    events: list[tuple[int, str, int]] | None = None
    stage_fails: list[int] = field(default_factory=lambda: [0])
    stage_count: int = 1
    # hardware-only measurements, one entry per CAS attempt
    cas_waits: list[int] = field(default_factory=list)
    cas_times: list[int] = field(default_factory=list)
    read_stalls: list[int] = field(default_factory=list)
    loop_spans: list[tuple[int, int]] = field(default_factory=list)
    header: dict = field(default_factory=dict)
    injected_at: int | None = None

    @property
    def P(self) -> int:
        return self.thread_count_P

    def time(self, ticks: int) -> Fraction:
        return ticks * self.tick

    def successes_of_stage(self, stage: int = 0) -> list[SuccessRecord]:
        return [s for s in self.successes if s.stage == stage]

    def fail_histogram(self, stage: int = 0) -> dict[str, int]:
        return fail_histogram(s.fails for s in self.successes_of_stage(stage))

    # hardware helpers -------------------------------------------------
    def window(self, start: int, end: int | None = None):
        end = self.horizon if end is None else end
        return [s for s in self.successes if start <= s.commit < end]

    def throughput(self, start: int = 0, end: int | None = None) -> Fraction:
        end = self.horizon if end is None else end
        return Fraction(len(self.window(start, end)), end - start) / self.tick

    def mean_cas_wait(self, start: int = 0, end: int | None = None) -> float:
        end = self.horizon if end is None else end
        w = [x for x, t in zip(self.cas_waits, self.cas_times) if start <= t < end]
        return float(np.mean(w)) if w else 0.0

    def occupancy(self, start: int = 0, end: int | None = None) -> float:
        """Time-average number of threads inside the retry loop."""
        end = self.horizon if end is None else end
        busy = 0
        for a, b in self.loop_spans:
            lo, hi = max(a, start), min(b, end)
            if hi > lo:
                busy += hi - lo
        return busy / (end - start)

    def to_csv(self, path_or_file) -> None:
        export_trace_csv(self, path_or_file)


def fail_histogram(fail_counts: Iterable[int]) -> dict[str, int]:
    hist = dict.fromkeys(HISTOGRAM_KEYS, 0)
    for f in fail_counts:
        hist[str(f) if f < 6 else "6+"] += 1
    return hist


# --------------------------------------------------------------------------
# logical engine


def _common_denominator(values: Iterable[Fraction]) -> int:
    d = 1
    for v in values:
        d = math.lcm(d, v.denominator)
    return d


class _ChainEngine:
    """Integer-tick engine for one or more retry loops on separate access points.

    ``stages[i] = (pw_i, rl_i)`` in ticks.  Each thread starts with a try of
    stage 0 at its offset.
    """

    def __init__(self, stages, offsets, record_events=True):
        self.stages = list(stages)
        self.P = 0
        self.heap: list[tuple[int, int]] = []
        self.stage: list[int] = []
        self.fails: list[int] = []
        self.last_success: list[int | None] = [None] * len(self.stages)
        self.successes: list[SuccessRecord] = []
        self.stage_fails = [0] * len(self.stages)
        self.events = [] if record_events else None
        self.now = None
        for off in offsets:
            self.add_thread(off)

    def add_thread(self, first_try: int) -> int:
        if self.now is not None and first_try < self.now:
            raise ValueError("cannot add a thread in the simulated past")
        i = self.P
        self.P += 1
        self.stage.append(0)
        self.fails.append(0)
        rl = self.stages[0][1]
        heapq.heappush(self.heap, (first_try + rl, i))
        if self.events is not None:
            self.events.append((i, RETRY_START, first_try))
        return i

    def run(self, until: int) -> None:
        heap, stages, last = self.heap, self.stages, self.last_success
        events = self.events
        S = len(stages)
        while heap and heap[0][0] <= until:
            c, i = heapq.heappop(heap)
            self.now = c
            st = self.stage[i]
            rl = stages[st][1]
            start = c - rl
            prev = last[st]
            if prev is None or prev <= start:
                last[st] = c
                self.successes.append(SuccessRecord(i, start, c, self.fails[i], st))
                self.fails[i] = 0
                nxt = (st + 1) % S
                self.stage[i] = nxt
                pw, rl_next = stages[nxt]
                heapq.heappush(heap, (c + pw + rl_next, i))
                if events is not None:
                    events.append((i, CAS_SUCCESS, c))
                    events.append((i, PARALLEL_START, c))
                    events.append((i, RETRY_START, c + pw))
            else:
                self.fails[i] += 1
                self.stage_fails[st] += 1
                heapq.heappush(heap, (c + rl, i))
                if events is not None:
                    events.append((i, CAS_FAIL, c))
                    events.append((i, RETRY_START, c))
        self.now = until


def _logical_stages(config: SimConfig) -> list[tuple[Fraction, Fraction]]:
    if config.multi_loop is not None:
        return [(as_fraction(pw), as_fraction(rl)) for pw, rl in config.multi_loop.stages]
    return [(config.q + config.r, Fraction(1))]


def _prepare_logical(config: SimConfig, extra: Sequence[Fraction] = ()):
    if config.mode != LOGICAL:
        raise ValueError("expected a logical-mode configuration")
    stages = _logical_stages(config)
    if config.multi_loop is None and config.r == 0:
        warnings.warn(
            "r = 0: coinciding commits are resolved by thread index",
            DegenerateTimingWarning,
            stacklevel=3,
        )
    values = [x for st in stages for x in st]
    values += list(config.init_offsets) + [config.horizon] + list(extra)
    D = _common_denominator(values)

    def ticks(x: Fraction) -> int:
        return int(x * D)

    stage_ticks = [(ticks(pw), ticks(rl)) for pw, rl in stages]
    if any(rl <= 0 for _, rl in stage_ticks):
        raise ValueError("retry lengths must be > 0")
    return D, ticks, stage_ticks


def _trace_from_engine(engine: _ChainEngine, config: SimConfig, D: int, horizon: int):
    return SimTrace(
        mode=LOGICAL,
        thread_count_P=engine.P,
        tick=Fraction(1, D),
        horizon=horizon,
        successes=engine.successes,
        events=engine.events,
        stage_fails=list(engine.stage_fails),
        stage_count=len(engine.stages),
        header={"q": config.q, "r": config.r, "denominator": D},
    )


def run_logical(config: SimConfig, record_events: bool = True) -> SimTrace:
    """Simulate the abstract timing model up to ``config.horizon``."""
    D, ticks, stages = _prepare_logical(config)
    engine = _ChainEngine(stages, [ticks(o) for o in config.init_offsets], record_events)
    horizon = ticks(config.horizon)
    engine.run(horizon)
    if not engine.successes:
        raise SimulationError("horizon exhausted before the first success")
    return _trace_from_engine(engine, config, D, horizon)


@dataclass
class MultiLoopResult:
    trace: SimTrace
    rotation: int
    stage_fails: list[int]  # indexed like the caller's chain
    steady: "SteadyState"


def run_multi_loop(config: SimConfig, record_events: bool = False) -> MultiLoopResult:
    """Simulate a chain of retry loops, each on its own access point.

    Threads enter the longest retry loop first (the stages before it are
    part of the initialization), matching the reduction to a single loop.
    Fail counts are reported per stage in the caller's numbering.
    """
    chain = config.multi_loop
    if chain is None:
        raise ValueError("configuration has no retry-loop chain")
    _, rotation = reduce_chain(chain)
    stages = chain.stages[rotation:] + chain.stages[:rotation]
    rotated = SimConfig(
        config.thread_count_P,
        LOGICAL,
        init_offsets=config.init_offsets,
        horizon=config.horizon,
        multi_loop=RetryLoopChain(stages, chain.profile),
    )
    D, ticks, stage_ticks = _prepare_logical(rotated)
    engine = _ChainEngine(stage_ticks, [ticks(o) for o in rotated.init_offsets], record_events)
    horizon = ticks(rotated.horizon)
    engine.run(horizon)
    if not engine.successes:
        raise SimulationError("horizon exhausted before the first success")
    trace = _trace_from_engine(engine, rotated, D, horizon)
    S = len(stages)
    fails = [0] * S
    for k, n in enumerate(engine.stage_fails):
        fails[(k + rotation) % S] = n
    steady = detect_steady_state(trace)
    return MultiLoopResult(trace, rotation, fails, steady)


# --------------------------------------------------------------------------
# steady state


@dataclass
class SteadyState:
    detected: bool
    failures_f: int | None
    period: Fraction | None
    throughput: Fraction | None
    occupancy: Fraction | None
    fail_histogram: dict[str, int]
    onset_time: Fraction | None = None
    onset_index: int | None = None
    thread_count_P: int = 0


def _window_signature(succ: list[SuccessRecord], i: int, P: int):
    threads = tuple(s.thread for s in succ[i : i + P])
    diffs = tuple(succ[j + 1].commit - succ[j].commit for j in range(i, i + P))
    fails = tuple(s.fails for s in succ[i : i + P])
    return threads, diffs, fails


def detect_steady_state(
    trace: SimTrace,
    q: int | None = None,
    r: Real | None = None,
    P: int | None = None,
    windows: int = 3,
    stage: int = 0,
    after: int | None = None,
) -> SteadyState:
    """Find the earliest point from which the run repeats with period P successes.

    Successes are cut into windows of P; the execution is declared periodic
    at the first index where ``windows`` consecutive windows share the same
    thread order, inter-success spacing and fail counts, every thread
    succeeds once per window and all threads fail equally often.  Only
    successes committed at or after ``after`` (ticks) are considered.

    ``q`` and ``r`` are optional: when given, the detected period is checked
    against ``q + r + 1 + f`` and a mismatch is reported as not detected.
    """
    P = trace.P if P is None else P
    succ = trace.successes_of_stage(stage)
    if after is not None:
        succ = [s for s in succ if s.commit >= after]
    hist = fail_histogram(s.fails for s in succ)
    need = windows * P + 1
    everyone = set(range(trace.P)) if P == trace.P else None
    for i in range(0, len(succ) - need + 1):
        sig = _window_signature(succ, i, P)
        threads, _, fails = sig
        if len(set(threads)) != P or (everyone is not None and set(threads) != everyone):
            continue
        if len(set(fails)) != 1:
            continue
        if any(_window_signature(succ, i + w * P, P) != sig for w in range(1, windows)):
            continue
        period = trace.time(succ[i + P].commit - succ[i].commit)
        f = fails[0]
        if q is not None and r is not None and period != q + as_fraction(r) + 1 + f:
            continue
        return SteadyState(
            True,
            f,
            period,
            P / period,
            P * (f + 1) / period if trace.mode == LOGICAL else None,
            hist,
            onset_time=trace.time(succ[i].commit),
            onset_index=i,
            thread_count_P=P,
        )
    return SteadyState(False, None, None, None, None, hist, thread_count_P=P)


def run_until_steady(config: SimConfig, max_horizon=None, record_events=False):
    """Run a logical configuration, growing the horizon until it is periodic."""
    horizon = as_fraction(config.horizon)
    limit = as_fraction(max_horizon) if max_horizon is not None else horizon * 16
    while True:
        cfg = _replace_horizon(config, horizon)
        trace = run_logical(cfg, record_events)
        steady = detect_steady_state(trace)
        if steady.detected or horizon >= limit:
            return trace, steady
        horizon = min(horizon * 2, limit)


def _replace_horizon(config: SimConfig, horizon) -> SimConfig:
    return dataclasses.replace(config, horizon=horizon)


# --------------------------------------------------------------------------
# thread addition


@dataclass
class InjectionResult:
    base: SteadyState
    steady: SteadyState
    injected_at: Fraction
    first_success: Fraction | None
    trace: SimTrace


def inject_thread(
    steady_config: SimConfig,
    new_offset,
    horizon_periods: int = 10,
    settle_periods: int = 200,
) -> InjectionResult:
    """Add one thread to a periodic run and report the new steady state.

    The base configuration is run until it is periodic; the new thread makes
    its first try ``new_offset`` retry units after the first success of a
    steady period.  The run then continues until the enlarged system is
    periodic again (or ``settle_periods`` base periods have elapsed).
    """
    base_trace, base = run_until_steady(steady_config)
    if not base.detected:
        raise SimulationError("base configuration never became periodic")
    new_offset = as_fraction(new_offset)
    P = steady_config.thread_count_P
    anchor_idx = base.onset_index + 3 * P
    succ = base_trace.successes
    anchor = base_trace.time(succ[anchor_idx].commit)
    t_inj = anchor + new_offset
    horizon = t_inj + settle_periods * base.period
    cfg = _replace_horizon(steady_config, horizon)
    D, ticks, stages = _prepare_logical(cfg, extra=[t_inj, base.period])
    engine = _ChainEngine(stages, [ticks(o) for o in cfg.init_offsets], record_events=False)
    engine.run(ticks(t_inj))
    new_thread = engine.add_thread(ticks(t_inj))
    step = ticks(base.period) * 20
    end = ticks(horizon)
    steady = SteadyState(False, None, None, None, None, {}, thread_count_P=P + 1)
    trace = None
    t = ticks(t_inj)
    while t < end:
        t = min(t + step, end)
        engine.run(t)
        trace = _trace_from_engine(engine, cfg, D, t)
        trace.injected_at = ticks(t_inj)
        steady = detect_steady_state(trace, after=ticks(t_inj))
        if steady.detected:
            break
    first = next((s for s in engine.successes if s.thread == new_thread), None)
    first_success = Fraction(first.commit, D) if first is not None else None
    return InjectionResult(base, steady, t_inj, first_success, trace)


# --------------------------------------------------------------------------
# hardware engine

_READ, _CAS = 0, 1


def run_hardware(config: SimConfig, record_events: bool = False) -> SimTrace:
    """Cycle-level simulation of Read/CAS contention on one cache line."""
    if config.mode != HARDWARE:
        raise ValueError("expected a hardware-mode configuration")
    prof, work = config.profile, config.workload
    P = config.thread_count_P
    rc, cc, cw = int(round(prof.rc)), int(round(prof.cc)), int(round(work.cw))
    pw_mean = float(work.pw)
    pad = int(config.backoff_pad)
    horizon = int(config.horizon)
    spacing = rc + cw + cc if config.spawn_spacing is None else int(config.spawn_spacing)
    rng = np.random.default_rng(config.rng_seed)
    if config.pw_sampler == "poisson":
        def sample_pw() -> int:
            return int(rng.poisson(pw_mean)) + pad
    else:
        const_pw = int(round(pw_mean)) + pad

        def sample_pw() -> int:
            return const_pw

    events = [] if record_events else None
    successes: list[SuccessRecord] = []
    success_starts: list[int] = []  # CAS start cycles of successful CASes
    cas_starts: list[int] = []  # every CAS, in line-grant order
    cas_waits, cas_times, read_stalls, loop_spans = [], [], [], []
    line_free = 0
    read_version = [0] * P
    fails = [0] * P
    loop_entry = [0] * P
    retry_start = [0] * P
    expandable = [True] * P
    in_loop = [False] * P

    # heap of (time, kind, thread); reads sort before CAS requests at a tie
    heap: list[tuple[int, int, int]] = []
    for i in range(P):
        t0 = i * spacing + sample_pw()
        heap.append((t0, _READ, i))
        loop_entry[i] = t0
        if events is not None:
            events.append((i, PARALLEL_START, i * spacing))
    heapq.heapify(heap)

    while heap:
        t, kind, i = heapq.heappop(heap)
        if t > horizon:
            break
        if kind == _READ:
            retry_start[i] = t
            in_loop[i] = True
            if events is not None:
                events.append((i, RETRY_START, t))
            eff = t
            if expandable[i]:
                # only the CAS holding the line at t, started before t, stalls the Read
                j = bisect.bisect_left(cas_starts, t) - 1
                if j >= 0 and cas_starts[j] + cc > t:
                    eff = cas_starts[j] + cc
            read_stalls.append(eff - t)
            read_version[i] = bisect.bisect_left(success_starts, eff)
            heapq.heappush(heap, (eff + rc + cw, _CAS, i))
        else:
            start = max(t, line_free)
            line_free = start + cc
            cas_starts.append(start)
            cas_waits.append(start - t)
            cas_times.append(t)
            done = start + cc
            if bisect.bisect_left(success_starts, start) == read_version[i]:
                success_starts.append(start)
                successes.append(SuccessRecord(i, retry_start[i], done, fails[i]))
                loop_spans.append((loop_entry[i], done))
                fails[i] = 0
                expandable[i] = True
                in_loop[i] = False
                nxt = done + sample_pw()
                loop_entry[i] = nxt
                heapq.heappush(heap, (nxt, _READ, i))
                if events is not None:
                    events.append((i, CAS_SUCCESS, done))
                    events.append((i, PARALLEL_START, done))
            else:
                fails[i] += 1
                expandable[i] = False
                heapq.heappush(heap, (done, _READ, i))
                if events is not None:
                    events.append((i, CAS_FAIL, done))
    # threads still inside the loop at the horizon
    for i in range(P):
        if in_loop[i]:
            loop_spans.append((loop_entry[i], horizon))
    if not successes:
        raise SimulationError("horizon exhausted before the first success")
    return SimTrace(
        mode=HARDWARE,
        thread_count_P=P,
        tick=Fraction(1),
        horizon=horizon,
        successes=successes,
        events=events,
        cas_waits=cas_waits,
        cas_times=cas_times,
        read_stalls=read_stalls,
        loop_spans=loop_spans,
        header={
            "rc": rc,
            "cc": cc,
            "cw": cw,
            "pw": pw_mean,
            "pw_sampler": config.pw_sampler,
            "rng_seed": config.rng_seed,
            "backoff_pad": pad,
            "spawn_spacing": spacing,
        },
    )


# --------------------------------------------------------------------------
# export


def export_trace_csv(trace: SimTrace, path_or_file) -> None:
    """Write the event log; logical traces keep exact times as num/den."""
    if trace.events is None:
        raise ValueError("trace was recorded without events")
    order = sorted(range(len(trace.events)), key=lambda k: (trace.events[k][2], k))
    close = False
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        fh = open(path_or_file, "w", newline="")
        close = True
    else:
        fh = path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        if trace.mode == LOGICAL:
            w.writerow(["thread", "event", "time_num", "time_den"])
            for k in order:
                thread, event, t = trace.events[k]
                x = trace.time(t)
                w.writerow([thread, event, x.numerator, x.denominator])
        else:
            w.writerow(["thread", "event", "cycle"])
            for k in order:
                thread, event, t = trace.events[k]
                w.writerow([thread, event, t])
    finally:
        if close:
            fh.close()
