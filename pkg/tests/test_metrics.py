import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fdidse.errors import DegenerateDenominator, DegenerateMeasurement
from fdidse.metrics import MetricReport, tau1, tau2, timing_stats


def test_tau1_examples():
    assert tau1([1.0, 2.0], [1.0, 2.0], [1.1, 1.9]) == 0.0
    assert tau1([1.1], [1.0], [1.0]) == pytest.approx(0.1, rel=1e-12)


def test_tau2_examples():
    assert tau2([1.0, 2.0], [1.0, 2.0], [1.1, 1.9]) == 0.0
    assert tau2([1.1, 1.9], [1.0, 2.0], [1.1, 1.9]) == pytest.approx(1.0, rel=1e-12)


def test_against_frozen_oracle(frozen):
    for case in frozen["metrics"]:
        assert tau1(case["est"], case["truth"], case["meas"]) == pytest.approx(case["tau1"], rel=1e-12)
        assert tau2(case["est"], case["truth"], case["meas"]) == pytest.approx(case["tau2"], rel=1e-12)


def test_degenerate_inputs():
    with pytest.raises(DegenerateMeasurement):
        tau1([1.0], [1.0], [0.0])
    with pytest.raises(DegenerateDenominator):
        tau2([1.1], [1.0], [1.0])
    with pytest.raises(ValueError):
        tau1([1.0, 2.0], [1.0], [1.0])


vals = arrays(float, 20, elements=st.floats(20, 80))


@settings(max_examples=100, deadline=None)
@given(vals, vals, st.floats(0.1, 10))
def test_tau2_scale_invariant(t, z, k):
    assume(np.abs(z - t).max() > 1e-3)
    e = t + 0.3 * (z - t)
    assert tau2(e * k, t * k, z * k) == pytest.approx(tau2(e, t, z), rel=1e-9)
    assert tau2(e, t, z) == pytest.approx(0.3, rel=1e-6)


def test_timing_examples():
    assert timing_stats([1.24] * 50) == pytest.approx((1.24, 1.24))
    assert timing_stats([1, 2, 3]) == (2.0, 3.0)
    with pytest.raises(ValueError):
        timing_stats([])


def test_p95_nearest_rank():
    mean, p95 = timing_stats(np.arange(1, 101))
    assert p95 == 95.0 and mean == 50.5


def test_report_lookup():
    rep = MetricReport(rows=[("none", "ckf", "tau1", "delta", 0.5)])
    assert rep.value("none", "ckf", "tau1", "delta") == 0.5
    with pytest.raises(KeyError):
        rep.value("none", "rckf", "tau1", "delta")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(30, 80, 40)
    z = t + rng.normal(0, 2, 40)
    e = t + rng.normal(0, 0.5, 40)
    perm = rng.permutation(40)
    assert tau1(e[perm], t[perm], z[perm]) == pytest.approx(tau1(e, t, z), rel=1e-12)
    assert tau2(e[perm], t[perm], z[perm]) == pytest.approx(tau2(e, t, z), rel=1e-12)


def test_tau2_below_one_iff_filtering_gain():
    t = np.linspace(40, 60, 30)
    z = t + np.sin(np.arange(30))
    assert tau2(t + 0.5 * (z - t), t, z) < 1
    assert tau2(t + 1.5 * (z - t), t, z) > 1
