"""Throughput bounds from combining CAS expansion with logical conflicts.

For an assumed number ``x`` of threads inside the retry loop we expand both
the parallel section and the retry by ``e(x)``, normalize, pick the fewest
(high side) or most (low side) failures a cyclic execution allows, and read
back the occupancy that execution implies.  The estimate is the smallest
fixed point of that map.

Arithmetic is kept generic: with exact inputs and no expansion (``cc == 0``)
everything stays rational until the final conversion to float.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .expansion import ExpansionCurve, expansion_at, solve_expansion
from .logical import failure_bounds
from .model import PlatformProfile, WorkloadSpec, min_retry_cost, normalize

HIGH = "high"
LOW = "low"

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000
SCAN_STEP = 1 / 256

# occupancy of the f = 0 execution at the pw where failures start to appear
_ONSET = {HIGH: 1.0, LOW: 0.5}


class NonConvergenceError(RuntimeError):
    """The fixed-point iteration did not settle within ``max_iter`` steps."""

    def __init__(self, side: str, iterates: Sequence[float]):
        tail = ", ".join(f"{x:.6g}" for x in iterates[-4:])
        super().__init__(f"{side}-side iteration did not converge; last iterates: {tail}")
        self.side = side
        self.iterates = list(iterates)


class SweepError(ValueError):
    def __init__(self, index: int, pw, cause: Exception):
        super().__init__(f"sweep point {index} (pw={pw}) failed: {cause}")
        self.index = index
        self.pw = pw
        self.cause = cause


class BackoffBoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FixedPoint:
    occupancy: object
    expansion: object
    failures_f: int
    throughput: object  # successes per cycle
    iterations: int
    iterates: tuple = ()
    scanned: bool = False


@dataclass(frozen=True)
class ThroughputEstimate:
    pw: float
    thr_low: float
    thr_high: float
    thr_avg: float
    f_low: int
    f_high: int
    expansion_low: float
    expansion_high: float
    occupancy_low: float
    occupancy_high: float

    def as_row(self) -> dict:
        return {
            "pw_cycles": self.pw,
            "thr_low": self.thr_low,
            "thr_high": self.thr_high,
            "thr_avg": self.thr_avg,
            "f_low": self.f_low,
            "f_high": self.f_high,
            "expansion_low": self.expansion_low,
            "expansion_high": self.expansion_high,
            "occupancy_low": self.occupancy_low,
            "occupancy_high": self.occupancy_high,
        }


@dataclass(frozen=True)
class BackoffRecommendation:
    peak_pw: float
    peak_throughput: float
    at_boundary: bool = False

    def backoff_for(self, pw: float) -> float:
        return max(0.0, self.peak_pw - pw)


@lru_cache(maxsize=256)
def _curve(rc: float, cw: float, cc: float, P: int, Prl0: float) -> ExpansionCurve:
    return solve_expansion(PlatformProfile(rc, cc, P), cw, Prl0, max(float(P), Prl0))


def _side_f(P: int, q: int, r, side: str) -> int:
    lo, hi = failure_bounds(P, q, r)
    return lo if side == HIGH else hi


class _Map:
    """The occupancy map ``x -> h(x)`` for one side and one workload."""

    def __init__(self, profile: PlatformProfile, workload: WorkloadSpec, side: str):
        if side not in (HIGH, LOW):
            raise ValueError(f"bound side must be 'high' or 'low', got {side!r}")
        self.P = profile.P
        self.pw = workload.pw
        self.rlw = min_retry_cost(profile, workload)
        self.side = side
        # a lone thread never contends for the line
        self.expands = profile.cc > 0 and self.P > 1
        if self.expands:
            self.curve = _curve(
                float(profile.rc), float(workload.cw), float(profile.cc), self.P, _ONSET[side]
            )

    def expansion(self, x):
        if not self.expands or x <= self.curve.start_occupancy_Prl0:
            return 0
        return expansion_at(self.curve, min(x, self.curve.max_occupancy))

    def evaluate(self, x):
        """Return ``(occupancy, e, f, throughput_per_cycle)`` at assumed occupancy x."""
        e = self.expansion(x)
        pw_e = self.pw + e
        rlw_e = self.rlw + e
        nw = normalize(pw_e, rlw_e)
        f = _side_f(self.P, nw.q, nw.r, self.side)
        # cycle form of P(f+1)/(q+r+f+1) and P/((q+r+f+1) rlw)
        cycle = pw_e + (f + 1) * rlw_e
        return self.P * (f + 1) * rlw_e / cycle, e, f, self.P / cycle


def fixed_point_occupancy(
    profile: PlatformProfile,
    workload: WorkloadSpec,
    bound_side: str = HIGH,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FixedPoint:
    """Smallest self-consistent occupancy on one side of the bound.

    Iterates ``x <- h(x)`` from 0.  When the parallel section is shorter than
    a retry the map need not be monotone, so the interval ``[0, P]`` is
    scanned instead and the first crossing of ``h(x) = x`` is refined.
    """
    h = _Map(profile, workload, bound_side)
    if workload.pw < h.rlw and h.expands:
        return _scan(h, tol)
    x = 0
    iterates = [x]
    for n in range(1, max_iter + 1):
        occ, e, f, thr = h.evaluate(x)
        iterates.append(occ)
        if abs(occ - x) < tol:
            return FixedPoint(occ, e, f, thr, n, tuple(iterates))
        x = occ
    raise NonConvergenceError(bound_side, [float(v) for v in iterates])


def _scan(h: _Map, tol: float) -> FixedPoint:
    P = h.P
    n_steps = int(round(P / SCAN_STEP))
    prev_x = 0.0
    if float(h.evaluate(prev_x)[0]) - prev_x <= 0:
        occ, e, f, thr = h.evaluate(prev_x)
        return FixedPoint(occ, e, f, thr, 1, scanned=True)
    for i in range(1, n_steps + 1):
        x = i * SCAN_STEP
        d = float(h.evaluate(x)[0]) - x
        if d <= 0:
            lo, hi = prev_x, x
            while hi - lo > tol:
                mid = (lo + hi) / 2
                if float(h.evaluate(mid)[0]) - mid > 0:
                    lo = mid
                else:
                    hi = mid
            occ, e, f, thr = h.evaluate(hi)
            return FixedPoint(occ, e, f, thr, i, scanned=True)
        prev_x = x
    # h(x) > x on the whole grid cannot happen since h(P) < P
    raise NonConvergenceError(h.side, [prev_x])


def estimate(
    profile: PlatformProfile,
    workload: WorkloadSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ThroughputEstimate:
    """Low, high and average throughput (successes per cycle) for one workload.

    Poisson parallel sections are treated through their mean.
    """
    hi = fixed_point_occupancy(profile, workload, HIGH, tol, max_iter)
    lo = fixed_point_occupancy(profile, workload, LOW, tol, max_iter)
    thr_high, thr_low = float(hi.throughput), float(lo.throughput)
    return ThroughputEstimate(
        pw=float(workload.pw),
        thr_low=thr_low,
        thr_high=thr_high,
        thr_avg=(thr_low + thr_high) / 2,
        f_low=lo.failures_f,
        f_high=hi.failures_f,
        expansion_low=float(lo.expansion),
        expansion_high=float(hi.expansion),
        occupancy_low=float(lo.occupancy),
        occupancy_high=float(hi.occupancy),
    )


def sweep(
    profile: PlatformProfile, workload_template: WorkloadSpec, pw_grid: Iterable[float]
) -> list[ThroughputEstimate]:
    grid = list(pw_grid)
    if not grid:
        raise ValueError("pw grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("pw grid must be strictly increasing")
    out = []
    for i, pw in enumerate(grid):
        try:
            out.append(estimate(profile, workload_template.with_pw(pw)))
        except (NonConvergenceError, ValueError) as exc:
            raise SweepError(i, pw, exc) from exc
    return out


def recommend_backoff(
    profile: PlatformProfile, workload_template: WorkloadSpec, search_grid: Iterable[float]
) -> BackoffRecommendation:
    """Pad the parallel section up to the pw where the average estimate peaks."""
    grid = list(search_grid)
    points = sweep(profile, workload_template, grid)
    best = max(range(len(points)), key=lambda i: (points[i].thr_avg, -i))
    # a peak at pw = 0 is genuine: the grid cannot be widened below zero
    boundary = len(points) > 1 and (
        best == len(points) - 1 or (best == 0 and grid[0] > 0)
    )
    if boundary:
        warnings.warn(
            f"throughput peak at grid edge pw={grid[best]}; widen the search grid",
            BackoffBoundaryWarning,
            stacklevel=2,
        )
    return BackoffRecommendation(float(grid[best]), points[best].thr_avg, boundary)


def logical_only(profile: PlatformProfile, workload: WorkloadSpec) -> tuple:
    """Bounds with hardware conflicts ignored: ``(thr_low, thr_high)`` per cycle."""
    rlw = min_retry_cost(profile, workload)
    nw = normalize(workload.pw, rlw)
    f_lo, f_hi = failure_bounds(profile.P, nw.q, nw.r)
    per = nw.q + nw.r + 1
    return profile.P / ((per + f_hi) * rlw), profile.P / ((per + f_lo) * rlw)


def peak_pw_estimate(profile: PlatformProfile, workload: WorkloadSpec) -> float:
    """Coarse starting point for back-off grids: where the high bound peaks."""
    return (profile.P - 1) * min_retry_cost(profile, workload)


__all__ = [
    "HIGH",
    "LOW",
    "BackoffBoundaryWarning",
    "BackoffRecommendation",
    "FixedPoint",
    "NonConvergenceError",
    "SweepError",
    "ThroughputEstimate",
    "estimate",
    "fixed_point_occupancy",
    "logical_only",
    "peak_pw_estimate",
    "recommend_backoff",
    "sweep",
]
