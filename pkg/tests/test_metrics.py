import math

import numpy as np
import pytest

from diffgossip.metrics import MetricsReport, average_rms_error, scaling_fit


def test_rms_identical_is_zero():
    r = np.random.default_rng(0).random((5, 5)) + 0.1
    assert average_rms_error(r, r.copy()) == (0.0, 0)


def test_rms_constant_ratio():
    r_hat = np.random.default_rng(1).random((4, 6)) + 0.1
    assert average_rms_error(2 * r_hat, r_hat).value == pytest.approx(0.5, abs=1e-15)


def test_rms_hand_example():
    got = average_rms_error([[1, 1], [1, 1]], [[1, 0.5], [1, 1]])
    assert got.value == pytest.approx(0.5 * math.sqrt(0.25 / 2), abs=1e-15)
    assert got.value == pytest.approx(0.1767766, abs=1e-7)


def test_rms_skips_zero_denominators():
    got = average_rms_error([[0, 2], [1, 1]], [[5, 1], [1, 1]])
    # row 0 keeps only (2 - 1) / 2; row 1 is exact
    assert got.skipped == 1
    assert got.value == pytest.approx(0.25)


def test_rms_errors():
    with pytest.raises(ValueError):
        average_rms_error(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        average_rms_error(np.ones((2, 2)), np.ones((2, 3)))


def test_scaling_fit_constant_steps():
    fit = scaling_fit([100, 1000, 10000], [40, 40, 40])
    assert fit.verdict and fit.c == pytest.approx(40 / math.log2(100) ** 2)


def test_scaling_fit_rejects_super_bound_growth():
    ns = [100, 1000, 10000, 50000]
    assert not scaling_fit(ns, [math.log2(n) ** 3 for n in ns]).verdict


def test_scaling_fit_order_independent():
    a = scaling_fit([1000, 100, 500], [60, 40, 50])
    b = scaling_fit([100, 500, 1000], [40, 50, 60])
    assert a == b


def test_scaling_fit_needs_three_points():
    with pytest.raises(ValueError):
        scaling_fit([100, 200], [1, 2])
    with pytest.raises(ValueError):
        scaling_fit([100, 200, 300], [1, 2])


def test_report_rate_and_row():
    r = MetricsReport(n=100, steps_to_converge=50, messages_total=6000)
    assert r.messages_per_node_per_step == 1.2
    row = r.as_row()
    assert row["messages_per_node_per_step"] == 1.2 and "psi_trace" not in row
    assert MetricsReport(10, 0, 0).messages_per_node_per_step == 0.0
    with pytest.raises(ValueError):
        MetricsReport(10, -1, 0)
