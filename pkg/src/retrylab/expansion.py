"""CAS expansion: extra stall per retry caused by serialized line ownership.

With ``Prl`` threads inside the retry loop on average, the expansion ``e``
obeys

    de/dPrl = cc * (cc/2 + e) / (rc + cw + cc + e),    e(Prl0) = 0.

The equation is separable, which gives the implicit closed form used by
:func:`implicit_residual` to check the integrator.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .model import PlatformProfile

DEFAULT_STEP = 1 / 64


@dataclass(frozen=True)
class ExpansionCurve:
    start_occupancy_Prl0: float
    grid: tuple[tuple[float, float], ...]

    @property
    def occupancies(self) -> list[float]:
        return [p for p, _ in self.grid]

    @property
    def expansions(self) -> list[float]:
        return [e for _, e in self.grid]

    @property
    def max_occupancy(self) -> float:
        return self.grid[-1][0]


def _slope(e: float, rc_cw: float, cc: float) -> float:
    return cc * (cc / 2 + e) / (rc_cw + cc + e)


def _rk4_step(e: float, h: float, rc_cw: float, cc: float) -> float:
    # autonomous right-hand side: no explicit dependence on Prl
    k1 = _slope(e, rc_cw, cc)
    k2 = _slope(e + 0.5 * h * k1, rc_cw, cc)
    k3 = _slope(e + 0.5 * h * k2, rc_cw, cc)
    k4 = _slope(e + h * k3, rc_cw, cc)
    return e + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6


def solve_expansion(
    profile: PlatformProfile,
    cw: float,
    Prl0: float,
    Prl_max: float,
    step: float = DEFAULT_STEP,
) -> ExpansionCurve:
    """Integrate the expansion equation on ``[Prl0, Prl_max]`` with fixed-step RK4.

    The last step is shortened so that ``Prl_max`` is always a grid point.
    """
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    if Prl0 < 0 or Prl_max < Prl0:
        raise ValueError(f"need 0 <= Prl0 <= Prl_max, got {Prl0}, {Prl_max}")
    rc_cw = profile.rc + cw
    cc = profile.cc
    n_full = int(math.floor((Prl_max - Prl0) / step + 1e-9))
    points = [Prl0 + i * step for i in range(n_full + 1)]
    if Prl_max - points[-1] > 1e-12:
        points.append(Prl_max)
    e = 0.0
    grid = [(points[0], 0.0)]
    for a, b in zip(points, points[1:]):
        if cc > 0:
            e = _rk4_step(e, b - a, rc_cw, cc)
        grid.append((b, e))
    return ExpansionCurve(float(Prl0), tuple(grid))


def implicit_residual(
    profile: PlatformProfile, cw: float, Prl0: float, Prl: float, e: float
) -> float:
    """Zero exactly on the solution curve through ``(Prl0, 0)``.

    ``e + (rc + cw + cc/2) * ln((cc/2 + e) / (cc/2)) - cc * (Prl - Prl0)``
    """
    cc = profile.cc
    if not cc > 0:
        raise ValueError("implicit form needs cc > 0 (the solution is e = 0 otherwise)")
    if e < 0:
        raise ValueError(f"expansion must be >= 0, got {e}")
    half = cc / 2
    return e + (profile.rc + cw + half) * math.log((half + e) / half) - cc * (Prl - Prl0)


def expansion_at(curve: ExpansionCurve, Prl: float) -> float:
    """Linearly interpolated expansion; zero below the onset occupancy."""
    xs = curve.occupancies
    if Prl <= xs[0]:
        return 0.0
    if Prl > xs[-1] + 1e-12:
        raise ValueError(f"occupancy {Prl} beyond solved range [{xs[0]}, {xs[-1]}]")
    i = bisect.bisect_left(xs, Prl)
    if i >= len(xs):
        return curve.grid[-1][1]
    x1, e1 = curve.grid[i]
    if x1 == Prl:
        return e1
    x0, e0 = curve.grid[i - 1]
    return e0 + (e1 - e0) * (Prl - x0) / (x1 - x0)
