import warnings
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from retrylab.estimator import (
    HIGH,
    LOW,
    BackoffBoundaryWarning,
    BackoffRecommendation,
    NonConvergenceError,
    SweepError,
    _Map,
    estimate,
    fixed_point_occupancy,
    logical_only,
    peak_pw_estimate,
    recommend_backoff,
    sweep,
)
from retrylab.logical import failure_bounds, throughput_and_occupancy
from retrylab.model import PlatformProfile, WorkloadSpec, immediate_upper_bound, normalize

P4 = PlatformProfile(50, 50, 4)


def test_known_points():
    est = estimate(P4, WorkloadSpec(300, 0))
    assert est.thr_high == pytest.approx(1 / 100)
    assert est.f_high == 0 and est.expansion_high == 0
    assert est.thr_low < est.thr_high
    est = estimate(P4, WorkloadSpec(700, 0))
    assert est.thr_low == est.thr_high == 4 / 800
    assert est.thr_avg == (est.thr_low + est.thr_high) / 2


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 12), st.floats(0, 3000), st.floats(0, 300), st.sampled_from([HIGH, LOW]))
def test_fixed_point_is_self_consistent(P, pw, cw, side):
    prof = PlatformProfile(50, 50, P)
    w = WorkloadSpec(pw, cw)
    fp = fixed_point_occupancy(prof, w, side)
    occ, e, f, thr = _Map(prof, w, side).evaluate(fp.occupancy)
    if fp.scanned:
        # bisection brackets the crossing; the map may jump there
        assert fp.occupancy <= P
    else:
        assert occ == pytest.approx(fp.occupancy, abs=1e-5)
    assert 0 <= fp.occupancy <= P
    assert fp.throughput <= immediate_upper_bound(prof, w) * (1 + 1e-12)
    lo, hi = failure_bounds(P, *_qr(pw + fp.expansion, 100 + cw + fp.expansion))
    assert fp.failures_f == (lo if side == HIGH else hi)


def _qr(pw, rlw):
    nw = normalize(pw, rlw)
    return nw.q, nw.r


def test_exact_with_fractions_and_no_cas_cost():
    prof = PlatformProfile(F(50), F(0), 4)
    w = WorkloadSpec(F(130), F(25))
    rlw = F(75)
    q, r = _qr(F(130), rlw)
    lo, hi = failure_bounds(4, q, r)
    fp = fixed_point_occupancy(prof, w, HIGH)
    thr, occ = throughput_and_occupancy(4, q, r, lo)
    assert fp.throughput == thr / rlw
    assert fp.occupancy == occ
    fp = fixed_point_occupancy(prof, w, LOW)
    assert fp.throughput == throughput_and_occupancy(4, q, r, hi)[0] / rlw
    assert logical_only(prof, w) == (
        throughput_and_occupancy(4, q, r, hi)[0] / rlw,
        throughput_and_occupancy(4, q, r, lo)[0] / rlw,
    )


def test_single_thread_never_expands():
    prof = PlatformProfile(50, 50, 1)
    for pw in (0, 10, 500):
        est = estimate(prof, WorkloadSpec(pw, 20))
        assert est.expansion_low == est.expansion_high == 0
        assert est.thr_low == est.thr_high == 1 / (pw + 120)


def test_expansion_lowers_throughput():
    w = WorkloadSpec(0, 0)
    with_cc = estimate(P4, w)
    no_cc = logical_only(PlatformProfile(50, 1e-12, 4), w)
    assert with_cc.thr_high < no_cc[1]
    assert with_cc.expansion_high > 0


def test_nonconvergence_reports_iterates():
    with pytest.raises(NonConvergenceError) as exc:
        fixed_point_occupancy(P4, WorkloadSpec(300, 0), HIGH, max_iter=1)
    assert exc.value.side == HIGH
    assert exc.value.iterates[0] == 0
    with pytest.raises(ValueError):
        fixed_point_occupancy(P4, WorkloadSpec(300, 0), "middle")


def test_sweep_validation_and_error_wrapping():
    with pytest.raises(ValueError):
        sweep(P4, WorkloadSpec(), [])
    with pytest.raises(ValueError):
        sweep(P4, WorkloadSpec(), [10, 10])
    with pytest.raises(SweepError) as exc:
        sweep(P4, WorkloadSpec(), [-10, 0, 100])
    assert exc.value.index == 0 and exc.value.pw == -10
    assert isinstance(exc.value.cause, ValueError)
    rows = sweep(P4, WorkloadSpec(0, 10), [0, 100, 200])
    assert [r.pw for r in rows] == [0, 100, 200]


def test_as_row_columns():
    row = estimate(P4, WorkloadSpec(300, 0)).as_row()
    assert list(row) == [
        "pw_cycles", "thr_low", "thr_high", "thr_avg", "f_low", "f_high",
        "expansion_low", "expansion_high", "occupancy_low", "occupancy_high",
    ]


def test_recommend_backoff_peak_and_pad():
    grid = range(0, 1501, 5)
    rec = recommend_backoff(PlatformProfile(50, 50, 8), WorkloadSpec(0, 0), grid)
    assert not rec.at_boundary
    points = sweep(PlatformProfile(50, 50, 8), WorkloadSpec(0, 0), grid)
    assert rec.peak_throughput == max(p.thr_avg for p in points)
    assert rec.backoff_for(rec.peak_pw - 200) == 200
    assert rec.backoff_for(rec.peak_pw + 200) == 0


def test_recommend_backoff_warns_at_edge():
    with pytest.warns(BackoffBoundaryWarning):
        rec = recommend_backoff(P4, WorkloadSpec(0, 0), [200, 250, 300])
    assert rec.at_boundary and rec.peak_pw == 300
    with pytest.warns(BackoffBoundaryWarning):
        recommend_backoff(PlatformProfile(50, 50, 1), WorkloadSpec(0, 0), [10, 20, 30])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rec = recommend_backoff(PlatformProfile(50, 50, 1), WorkloadSpec(0, 0), [0, 10, 20])
    assert rec.peak_pw == 0 and not rec.at_boundary
    assert BackoffRecommendation(100.0, 1.0, False).backoff_for(30) == 70


def test_peak_pw_estimate():
    assert peak_pw_estimate(P4, WorkloadSpec(0, 20)) == 3 * 120
