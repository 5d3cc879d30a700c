"""Shared parameter types and the closed-form pieces of the retry-loop model.

All durations are CPU cycles.  Inside the logical model the parallel section
is measured in *retry units*: ``pw = (q + r) * rlw`` with ``q`` a whole number
of retries and ``0 <= r < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from numbers import Real
from typing import Sequence


class Distribution(str, Enum):
    CONSTANT = "constant"
    POISSON_MEAN = "poisson_mean"


@dataclass(frozen=True)
class PlatformProfile:
    """Hardware latencies of the contended cache line and the thread count."""

    read_latency_rc: float
    cas_latency_cc: float
    thread_count_P: int = 1

    def __post_init__(self):
        if not self.read_latency_rc > 0:
            raise ValueError(f"read latency must be > 0, got {self.read_latency_rc}")
        # cc == 0 is tolerated: it is the "no serialization" limit used to
        # decouple the expansion model from the logical one.
        if self.cas_latency_cc < 0:
            raise ValueError(f"CAS latency must be >= 0, got {self.cas_latency_cc}")
        if int(self.thread_count_P) != self.thread_count_P or self.thread_count_P < 1:
            raise ValueError(f"thread count must be an integer >= 1, got {self.thread_count_P}")

    @property
    def rc(self) -> float:
        return self.read_latency_rc

    @property
    def cc(self) -> float:
        return self.cas_latency_cc

    @property
    def P(self) -> int:
        return int(self.thread_count_P)

    def with_threads(self, P: int) -> "PlatformProfile":
        return PlatformProfile(self.read_latency_rc, self.cas_latency_cc, P)


@dataclass(frozen=True)
class WorkloadSpec:
    """Sizes of the parallel section and of the critical work inside a retry."""

    parallel_work_pw: float = 0.0
    critical_work_cw: float = 0.0
    pw_distribution: Distribution = Distribution.CONSTANT

    def __post_init__(self):
        if self.parallel_work_pw < 0:
            raise ValueError(f"parallel work must be >= 0, got {self.parallel_work_pw}")
        if self.critical_work_cw < 0:
            raise ValueError(f"critical work must be >= 0, got {self.critical_work_cw}")
        object.__setattr__(self, "pw_distribution", Distribution(self.pw_distribution))

    @property
    def pw(self) -> float:
        return self.parallel_work_pw

    @property
    def cw(self) -> float:
        return self.critical_work_cw

    def with_pw(self, pw: float) -> "WorkloadSpec":
        return WorkloadSpec(pw, self.critical_work_cw, self.pw_distribution)


@dataclass(frozen=True)
class NormalizedWork:
    q: int
    r: Real
    retry_cost_rlw: Real

    @property
    def ratio(self) -> Real:
        return self.q + self.r


@dataclass(frozen=True)
class RetryLoopChain:
    """Sequence of (parallel work, retry length) stages run in a cycle.

    ``stages[i] = (pw_i, rlw_i)``: the i-th parallel section followed by a
    retry loop whose single retry lasts ``rlw_i`` cycles.
    """

    stages: tuple[tuple[Real, Real], ...]
    profile: PlatformProfile | None = field(default=None, compare=False)

    def __post_init__(self):
        stages = tuple((pw, rlw) for pw, rlw in self.stages)
        if not stages:
            raise ValueError("a retry-loop chain needs at least one stage")
        for pw, rlw in stages:
            if pw < 0 or rlw < 0:
                raise ValueError(f"stage work must be >= 0, got {(pw, rlw)}")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def from_critical_work(
        cls, profile: PlatformProfile, stages: Sequence[tuple[float, float]]
    ) -> "RetryLoopChain":
        """Build a chain from ``(pw_i, cw_i)`` pairs, each retry costing rc+cw_i+cc."""
        return cls(
            tuple((pw, profile.rc + cw + profile.cc) for pw, cw in stages), profile
        )


def min_retry_cost(profile: PlatformProfile, workload: WorkloadSpec) -> float:
    """Shortest possible retry: one Read, the critical work and one CAS."""
    return profile.rc + workload.cw + profile.cc


def normalize(parallel_cycles: Real, retry_cycles: Real) -> NormalizedWork:
    """Express a parallel section as ``q`` whole retries plus a fraction ``r``.

    Exact when both arguments are :class:`fractions.Fraction` or ints.
    """
    if not retry_cycles > 0:
        raise ValueError(f"retry length must be > 0, got {retry_cycles}")
    if parallel_cycles < 0:
        raise ValueError(f"parallel work must be >= 0, got {parallel_cycles}")
    ratio = parallel_cycles / retry_cycles
    q = math.floor(ratio)
    r = ratio - q
    if r >= 1:  # float rounding right below an integer
        q, r = q + 1, r - 1
    return NormalizedWork(int(q), r, retry_cycles)


def immediate_upper_bound(profile: PlatformProfile, workload: WorkloadSpec) -> float:
    """Throughput ceiling from the system-wise and thread-wise arguments alone.

    Returns successes per cycle: ``1/rlw`` while the retry loop is the
    bottleneck, ``P/(pw + rlw)`` once every thread can succeed first time.
    """
    rlw = min_retry_cost(profile, workload)
    if workload.pw <= (profile.P - 1) * rlw:
        return 1.0 / rlw
    return profile.P / (workload.pw + rlw)


def reduce_chain(chain: RetryLoopChain) -> tuple[WorkloadSpec, int]:
    """Collapse a multi-loop chain into the equivalent single retry loop.

    Successes in the longest loop are at least one of its retries apart, so
    no shorter loop downstream ever sees a conflict: those stages are
    constant work and join the parallel section.  The chain is
    rotated so that the longest stage (first one on ties) comes first.

    The returned workload has ``pw = pw_1 + sum(pw_i + rlw_i, i >= 2)`` and a
    critical work chosen so that its retry costs exactly ``rlw_1``: with a
    profile attached that is ``rlw_1 - rc - cc``, without one the chain is
    taken as pure retry lengths and ``cw = rlw_1``.

    Returns ``(workload, rotation)``, ``rotation`` being the index of the
    stage moved to the front.
    """
    stages = chain.stages
    longest = max(rlw for _, rlw in stages)
    rotation = next(i for i, (_, rlw) in enumerate(stages) if rlw == longest)
    rotated = stages[rotation:] + stages[:rotation]
    pw = rotated[0][0] + sum(pw_i + rlw_i for pw_i, rlw_i in rotated[1:])
    cw = longest
    if chain.profile is not None:
        cw = longest - chain.profile.rc - chain.profile.cc
    return WorkloadSpec(pw, cw), rotation


def reduced_retry_length(chain: RetryLoopChain) -> Real:
    return max(rlw for _, rlw in chain.stages)


def rotate_chain(chain: RetryLoopChain, rotation: int) -> RetryLoopChain:
    stages = chain.stages
    rotation %= len(stages)
    return RetryLoopChain(stages[rotation:] + stages[:rotation], chain.profile)
