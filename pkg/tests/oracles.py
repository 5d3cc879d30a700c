"""Independent reference implementations used as test oracles.

These are deliberately naive: plain Fraction arithmetic, linear scans and
brute force, sharing no code with the package beyond its public types.
"""

from __future__ import annotations

import math
from fractions import Fraction


def brute_failure_bounds(P: int, q: int, r: Fraction, f_cap: int = 200) -> tuple[int, int]:
    """Smallest f with q + f >= P - 1 and largest f with f(q+1+f-P+r) < P."""
    f_min = next(f for f in range(f_cap) if q + f >= P - 1)
    f_max = max(f for f in range(f_cap) if f * (q + 1 + f - P + r) < P)
    return f_min, max(f_min, f_max)


def naive_logical_run(P: int, q: int, r: Fraction, offsets, until: Fraction):
    """Retry loops of unit length, parallel sections of length q + r.

    Returns the successes as ``(thread, start, fails)`` in commit order.  An
    attempt committing at c succeeds iff no success committed in (c-1, c);
    simultaneous commits go to the lowest thread index.
    """
    par = q + r
    nxt = [Fraction(o) + 1 for o in offsets]  # commit time of current attempt
    fails = [0] * P
    last = None
    out = []
    while True:
        c = min(nxt)
        if c > until:
            return out
        i = nxt.index(c)  # lowest index among ties
        if last is None or last <= c - 1:
            out.append((i, c - 1, fails[i]))
            fails[i] = 0
            last = c
            nxt[i] = c + par + 1
        else:
            fails[i] += 1
            nxt[i] = c + 1


def expansion_root(rc_cw: float, cc: float, dprl: float) -> float:
    """Bisection root of e + (rc+cw+cc/2) ln((cc/2+e)/(cc/2)) = cc * dprl."""
    half = cc / 2

    def g(e):
        return e + (rc_cw + half) * math.log((half + e) / half) - cc * dprl

    lo, hi = 0.0, cc * dprl + 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


def naive_chain_run(stages, P: int, offsets, until: Fraction):
    """Several retry loops in sequence, each with its own access point.

    ``stages[i] = (pw_i, rlw_i)``.  Returns per-stage fail totals and the
    number of completed full sequences.
    """
    S = len(stages)
    stage = [0] * P
    nxt = [Fraction(o) + stages[0][1] for o in offsets]
    last = [None] * S
    fails = [0] * S
    laps = 0
    while True:
        c = min(nxt)
        if c > until:
            return fails, laps
        i = nxt.index(c)
        s = stage[i]
        rl = stages[s][1]
        if last[s] is None or last[s] <= c - rl:
            last[s] = c
            s2 = (s + 1) % S
            if s2 == 0:
                laps += 1
            stage[i] = s2
            nxt[i] = c + stages[s2][0] + stages[s2][1]
        else:
            fails[s] += 1
            nxt[i] = c + rl
