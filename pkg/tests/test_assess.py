import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krigeclass.assess import (
    align,
    area_estimate,
    area_report,
    class_correlation,
    closeness_report,
    cross_entropy,
    mse_closeness,
    percent_deviation,
    pixel_area_ha,
    summarize,
)
from krigeclass.kbsc import ProbabilityMap
from krigeclass.raster import RasterGrid


def maps(*per_class, px=1.0, labels=None):
    labels = labels or [f"c{i}" for i in range(len(per_class))]
    return [ProbabilityMap(RasterGrid(np.atleast_2d(np.asarray(v, float)), px), lab) for v, lab in zip(per_class, labels)]


def test_s_identity_and_opposites():
    ref = maps([0.3, 1.0], [0.7, 0.0])
    assert mse_closeness(ref, ref)[1].mean == 0.0
    grid, _ = mse_closeness(maps([1.0], [0.0]), maps([0.0], [1.0]))
    assert grid.values[0, 0] == 1.0


def test_s_hand_value():
    grid, _ = mse_closeness(maps([0.6], [0.4]), maps([0.5], [0.5]))
    assert grid.values[0, 0] == pytest.approx(0.01)


def test_s_symmetric():
    a, b = maps([0.2, 0.9], [0.8, 0.1]), maps([0.6, 0.5], [0.4, 0.5])
    np.testing.assert_array_equal(mse_closeness(a, b)[0].values, mse_closeness(b, a)[0].values)


def test_class_mismatch():
    with pytest.raises(ValueError, match="class sets differ"):
        mse_closeness(maps([1.0], labels=["wheat"]), maps([1.0], labels=["mustard"]))


def test_d_identity_half_and_clamp():
    ref = maps([1.0, 0.3], [0.0, 0.7])
    assert np.all(cross_entropy(ref, ref).grid.values == 0)
    assert cross_entropy(maps([1.0], [0.0]), maps([0.5], [0.5])).grid.values[0, 0] == pytest.approx(1.0)
    res = cross_entropy(maps([0.5], [0.5]), maps([1.0], [0.0]), eps=1e-12)
    # first term 0.5 * log2(0.5 / 1), second uses the clamped test proportion
    assert res.grid.values[0, 0] == pytest.approx(0.5 * math.log2(0.5 / 1.0) + 0.5 * math.log2(0.5 / 1e-12))
    assert res.clamped == 1


def test_d_asymmetric():
    a, b = maps([0.9], [0.1]), maps([0.5], [0.5])
    assert cross_entropy(a, b).grid.values[0, 0] != pytest.approx(cross_entropy(b, a).grid.values[0, 0])


def test_d_renormalizes_and_rejects_negative():
    res = cross_entropy(maps([2.0], [2.0]), maps([0.5], [0.5]))
    assert res.grid.values[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert res.renormalized_ref == 1
    with pytest.raises(ValueError):
        cross_entropy(maps([1.0], [0.0]), maps([-0.1], [1.1]))
    with pytest.raises(ValueError):
        cross_entropy(maps([1.0]), maps([1.0]), eps=0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_gibbs_inequality(seed, c):
    rng = np.random.default_rng(seed)
    f1 = rng.dirichlet(np.ones(c), size=8).T + 1e-9
    f2 = rng.dirichlet(np.ones(c), size=8).T + 1e-9
    f1 /= f1.sum(axis=0)
    f2 /= f2.sum(axis=0)
    d = cross_entropy(maps(*f1), maps(*f2)).grid.values
    assert np.all(d >= -1e-12)


def test_correlation_cases():
    g = lambda v: RasterGrid(np.atleast_2d(np.asarray(v, float)), 1.0)
    assert class_correlation(g([0, 1, 2]), g([0, 2, 4]))[0] == pytest.approx(1.0)
    ref = np.array([0.1, 0.5, 0.3, 0.9])
    assert class_correlation(g(ref), g(1 - ref))[0] == pytest.approx(-1.0)
    r, r2 = class_correlation(g(ref), g([0.2, 0.4, 0.4, 0.7]))
    assert r2 == pytest.approx(r * r)
    assert r == pytest.approx(np.corrcoef(ref, [0.2, 0.4, 0.4, 0.7])[0, 1], abs=1e-12)
    with pytest.raises(ValueError):
        class_correlation(g([0.5, 0.5, 0.5]), g([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        class_correlation(g([0.5, np.nan]), g([0.1, 0.2]))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(-10, 10), st.integers(0, 1000))
def test_correlation_affine_invariance(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random(20), rng.random(20)
    g = lambda v: RasterGrid(v[None, :], 1.0)
    assert class_correlation(g(x), g(a * y + b))[0] == pytest.approx(class_correlation(g(x), g(y))[0], abs=1e-9)


def test_area_cases():
    assert area_estimate(RasterGrid(np.ones((3, 3)), 188.0))[0] == pytest.approx(9 * 3.5344)
    assert area_estimate(RasterGrid(np.zeros((3, 3)), 188.0))[0] == 0.0
    assert area_estimate(RasterGrid(np.full((2, 2), 0.25), 188.0), 3.5344)[0] == pytest.approx(3.5344)
    assert pixel_area_ha(188.0) == pytest.approx(3.5344)
    area, skipped = area_estimate(RasterGrid(np.array([[np.nan, 1.0]]), 100.0))
    assert (area, skipped) == (1.0, 1)


def test_percent_deviation_anchors():
    assert round(percent_deviation(1_684_582, 2_000_000), 4) == -15.7709
    assert round(percent_deviation(585_341, 612_000), 4) == -4.3560
    assert percent_deviation(5.0, 5.0) == 0.0
    with pytest.raises(ValueError):
        percent_deviation(1.0, 0.0)


def test_summary_rules():
    s = summarize(np.array([1.0, 2.0, 3.0, 10.0, np.nan]))
    assert (s.mean, s.median, s.count) == (4.0, 2.5, 4)
    assert s.sd == pytest.approx(np.std([1, 2, 3, 10], ddof=1))
    assert math.isnan(summarize(np.array([np.nan])).mean)


def test_report_identity_is_zero():
    ref = maps([0.2, 0.9, 0.5], [0.8, 0.1, 0.5])
    rep = closeness_report(ref, ref)
    assert rep.s.mean == rep.s.median == rep.d.mean == 0.0
    assert rep.correlations["c0"]["r"] == pytest.approx(1.0)
    assert set(rep.to_dict()) == {"S", "D", "correlation", "pixel_count", "notes"}


def test_area_report_percent_deviation():
    rep = area_report(maps(np.ones((2, 2)), labels=["wheat"], px=100.0), {"wheat": 5.0})
    assert rep.rows["wheat"]["percent_deviation"] == pytest.approx(-20.0)


def test_align_upscales_finer_side():
    fine = maps(np.arange(16.0).reshape(4, 4) / 16, px=10.0)
    coarse = maps(np.zeros((2, 2)), px=20.0)
    r, t = align(fine, coarse)
    assert r[0].grid.pixel_size == 20.0 and r[0].values[0, 0] == pytest.approx((0 + 1 + 4 + 5) / 16 / 4)
    r, t = align(coarse, fine)
    assert t[0].grid.shape == (2, 2)
    with pytest.raises(ValueError):
        align(fine, maps(np.zeros((1, 1)), px=15.0))
