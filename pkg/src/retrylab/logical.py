"""Cyclic executions of the retry loop with perfect hardware.

Everything here is expressed in retry units: a retry lasts 1, a parallel
section lasts ``q + r``.  A *seed* is the list of start times of P
consecutive successes, one per thread; the operations below tell whether a
seed repeats itself and how many failures the threads then pay per success.

The functions are written against the ``numbers.Real`` protocol so that they
run unchanged on floats (estimator) and on :class:`fractions.Fraction`
(simulator oracles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real
from typing import Sequence


@dataclass(frozen=True)
class SeedConfiguration:
    thread_count_P: int
    q: int
    r: Real
    success_starts: tuple[Real, ...]

    def __post_init__(self):
        starts = tuple(self.success_starts)
        object.__setattr__(self, "success_starts", starts)
        if len(starts) != self.thread_count_P:
            raise ValueError(
                f"expected {self.thread_count_P} success starts, got {len(starts)}"
            )
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("success starts must be strictly increasing")
        _check_qr(self.q, self.r)

    @property
    def P(self) -> int:
        return self.thread_count_P


@dataclass(frozen=True)
class GapTable:
    order_k: int
    values: tuple[Real, ...]


@dataclass(frozen=True)
class CyclicExecution:
    thread_count_P: int
    q: int
    r: Real
    failures_f: int

    def __post_init__(self):
        lo, hi = failure_bounds(self.thread_count_P, self.q, self.r)
        if not lo <= self.failures_f <= hi:
            raise ValueError(
                f"f={self.failures_f} outside [{lo}, {hi}] for "
                f"P={self.thread_count_P}, q={self.q}, r={self.r}"
            )

    @property
    def period(self) -> Real:
        return self.q + self.r + 1 + self.failures_f


def _check_qr(q, r) -> None:
    if int(q) != q or q < 0:
        raise ValueError(f"q must be a non-negative integer, got {q}")
    if not 0 <= r < 1:
        raise ValueError(f"r must lie in [0, 1), got {r}")


def fails_before_success(seed: SeedConfiguration) -> int:
    """Failures each thread pays before its next success if the seed repeats."""
    s = seed.success_starts
    return max(0, math.ceil(s[-1] - s[0] - seed.q - seed.r))


def gaps(seed: SeedConfiguration, order_k: int, f: int | None = None) -> GapTable:
    """Order-k gaps of a seed, straight from the success start times.

    ``f`` defaults to :func:`fails_before_success`; orders 0..P are accepted
    (order P is the full-cycle gap, identical for every thread).
    """
    P, q, r = seed.P, seed.q, seed.r
    if not 0 <= order_k <= P:
        raise ValueError(f"gap order must lie in [0, {P}], got {order_k}")
    if f is None:
        f = fails_before_success(seed)
    s = seed.success_starts
    k = order_k
    if k == 0:
        return GapTable(0, tuple(0 * s[0] for _ in range(P)))
    values = []
    for n in range(P):
        if n >= k:
            values.append(s[n] - s[n - k] - k)
        else:
            values.append(s[n] - s[P + n - k] + 1 + q + r + f - k)
    return GapTable(k, tuple(values))


def first_order_gaps(seed: SeedConfiguration, f: int | None = None) -> tuple[Real, ...]:
    return gaps(seed, 1, f).values


def lagging_time(seed: SeedConfiguration, f: int | None = None) -> Real:
    """Total first-order slack of one cycle minus the fractional retry ``r``."""
    return sum(first_order_gaps(seed, f)) - seed.r


def is_well_formed_seed(seed: SeedConfiguration) -> bool:
    """True iff every gap of order f lies in [0, 1), f the seed's failure count."""
    f = fails_before_success(seed)
    if f > seed.P:
        # orders above P wrap around more than one full cycle
        return False
    return all(0 <= g < 1 for g in gaps(seed, f, f).values)


def failure_bounds(P: int, q: int, r: Real) -> tuple[int, int]:
    """Fewest and most failures per success over all cyclic executions.

    ``f_max`` is the largest f with ``f * (q + 1 + f - P + r) < P``; the
    closed form ``floor((b + sqrt(b^2 + 4P)) / 2)``, ``b = P - 1 - q - r``,
    gives the same value except when that root is an exact integer, where
    the strict inequality excludes the root itself.
    """
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    _check_qr(q, r)
    f_min = P - q - 1 if q <= P - 1 else 0
    b = P - 1 - q - r
    f_max = math.floor((float(b) + math.sqrt(float(b) ** 2 + 4 * P)) / 2)
    a = -b  # q + 1 - P + r
    while f_max > 0 and f_max * (f_max + a) >= P:
        f_max -= 1
    while (f_max + 1) * (f_max + 1 + a) < P:
        f_max += 1
    return f_min, max(f_max, f_min)


def throughput_and_occupancy(P: int, q: int, r: Real, f: int) -> tuple[Real, Real]:
    """Successes per retry unit and mean number of threads inside the loop."""
    if f < 0:
        raise ValueError(f"f must be >= 0, got {f}")
    period = q + r + 1 + f
    return P / period, P * (f + 1) / period


def wasted_retries(P: int, q: int, r: Real) -> int:
    lo, hi = failure_bounds(P, q, r)
    return hi - lo


def max_wasted_retries(P: int) -> int:
    """Worst-case number of avoidable failures, ``ceil(sqrt(P) - 1)``."""
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    return math.isqrt(P - 1)


def construct_seed(P: int, q: int, r: Real, f: int) -> SeedConfiguration:
    """Evenly spaced seed whose cyclic execution has exactly ``f`` failures."""
    lo, hi = failure_bounds(P, q, r)
    if not lo <= f <= hi:
        raise ValueError(f"f={f} outside reachable range [{lo}, {hi}]")
    spacing = (q + 1 + f - P + r) / P + 1
    return SeedConfiguration(P, q, r, tuple(n * spacing for n in range(P)))


def seed_from_starts(P: int, q: int, r: Real, starts: Sequence[Real]) -> SeedConfiguration:
    return SeedConfiguration(P, q, r, tuple(starts))
