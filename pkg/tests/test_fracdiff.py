"""Tests for fractional differencing weights and filters."""

from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import linregress

from errors import DomainError
from fracdiff import (
    apply_fracdiff,
    apply_memory_filter,
    frac_integration_weights,
    frac_weight_table,
    frac_weights,
    frac_weights_grad,
)


class TestFracWeights:
    def test_w100_at_d04(self):
        w = frac_weights(0.4, 100).w
        assert f"{w[100]:.2e}" == "-4.27e-04"

    def test_single_lag(self):
        assert_allclose(frac_weights(0.4, 1).w, [1.0, -0.4])

    def test_matches_exact_product(self):
        d = Fraction(1, 5)
        exact = Fraction(1)
        for i in range(10):
            exact *= (i - d) / (i + 1)
        w10 = frac_weights(0.2, 10).w[10]
        assert w10 == pytest.approx(float(exact), rel=1e-14)

    @pytest.mark.parametrize("d", [0.1, 0.25, 0.4, 0.49])
    def test_recurrence_agrees_with_product(self, d):
        w = frac_weights(d, 1000).w
        for j in (1, 2, 17, 250, 1000):
            product = np.prod([(i - d) / (i + 1) for i in range(j)])
            assert w[j] == pytest.approx(product, rel=1e-12)

    @pytest.mark.parametrize("d", [0.05, 0.3, 0.49])
    def test_sign_and_monotone_magnitude(self, d):
        w = frac_weights(d, 200).w
        assert w[0] == 1.0
        assert w[1] == pytest.approx(-d)
        assert np.all(w[1:] < 0)
        assert np.all(np.diff(np.abs(w[1:])) < 0)

    @pytest.mark.parametrize("d", [0.1, 0.25, 0.4])
    def test_power_law_decay(self, d):
        w = frac_weights(d, 10000).w
        j = np.arange(100, 10001)
        slope = linregress(np.log(j), np.log(np.abs(w[100:]))).slope
        assert slope == pytest.approx(-(d + 1), abs=0.05)

    @pytest.mark.parametrize("d, K", [(0.0, 10), (1.0, 10), (-0.1, 10), (0.3, 0), (float("nan"), 5)])
    def test_domain_errors(self, d, K):
        with pytest.raises(DomainError):
            frac_weights(d, K)

    def test_domain_error_is_value_error(self):
        with pytest.raises(ValueError):
            frac_weights(1.5, 3)

    def test_weights_are_read_only(self):
        weights = frac_weights(0.3, 5)
        with pytest.raises(ValueError):
            weights.w[1] = 0.0


class TestFracWeightsGrad:
    def test_first_lags(self):
        dw = frac_weights_grad(0.4, 5)
        assert dw[0] == 0.0
        assert dw[1] == pytest.approx(-1.0)

    def test_finite_difference_at_lag_50(self):
        h = 1e-6
        fd = (frac_weights(0.3 + h, 50).w[50] - frac_weights(0.3 - h, 50).w[50]) / (2 * h)
        assert frac_weights_grad(0.3, 50)[50] == pytest.approx(fd, rel=1e-6)

    def test_finite_difference_random_points(self, rng):
        h = 1e-6
        for d, j in zip(rng.uniform(0.02, 0.95, 20), rng.integers(1, 300, 20)):
            fd = (frac_weights(d + h, j).w[j] - frac_weights(d - h, j).w[j]) / (2 * h)
            assert frac_weights_grad(d, j)[j] == pytest.approx(fd, rel=1e-6)

    def test_finite_for_small_d(self):
        dw = frac_weights_grad(1e-9, 500)
        assert np.all(np.isfinite(dw))


class TestWeightTable:
    def test_matches_scalar_recurrence(self):
        d = np.array([0.05, 0.2, 0.45])
        w, dw = frac_weight_table(d, 60)
        for row, value in enumerate(d):
            reference = frac_weights(value, 60)
            assert_allclose(w[row], reference.w, rtol=1e-12, atol=1e-300)
            assert_allclose(dw[row], reference.dw, rtol=1e-10, atol=1e-300)

    def test_zero_d_row(self):
        w, dw = frac_weight_table(np.array([0.0]), 4)
        assert_allclose(w[0], [1, 0, 0, 0, 0])
        assert np.all(np.isfinite(dw))
        assert dw[0, 1] == pytest.approx(-1.0)


class TestIntegrationWeights:
    @pytest.mark.parametrize("d", [0.1, 0.4])
    def test_inverts_differencing(self, d):
        K = 50
        product = np.convolve(frac_weights(d, K).w, frac_integration_weights(d, K))[:K + 1]
        expected = np.zeros(K + 1)
        expected[0] = 1.0
        assert_allclose(product, expected, atol=1e-12)

    def test_zero_d_is_identity(self):
        assert_allclose(frac_integration_weights(0.0, 3), [1, 0, 0, 0])


class TestMemoryFilter:
    def test_zero_history(self):
        assert apply_memory_filter(np.zeros(20), 0.3, 10) == 0.0

    def test_zero_d_gives_zero(self):
        assert apply_memory_filter(np.arange(1.0, 6.0), 0.0, 5) == 0.0

    def test_unit_impulse(self):
        history = np.zeros(100)
        history[0] = 1.0
        assert apply_memory_filter(history, 0.4, 100) == pytest.approx(-0.4)

    def test_matches_definition(self, rng):
        history = rng.standard_normal(30)
        w = frac_weights(0.35, 12).w
        expected = sum(w[j] * history[j - 1] for j in range(1, 13))
        assert apply_memory_filter(history, 0.35, 12) == pytest.approx(expected)

    def test_short_window_pads_with_zeros(self):
        history = np.array([1.0, 2.0])
        w = frac_weights(0.25, 10).w
        assert apply_memory_filter(history, 0.25, 10) == pytest.approx(w[1] + 2 * w[2])

    def test_linearity(self, rng):
        x, y = rng.standard_normal(40), rng.standard_normal(40)
        lhs = apply_memory_filter(2.5 * x - 0.7 * y, 0.3, 25)
        rhs = 2.5 * apply_memory_filter(x, 0.3, 25) - 0.7 * apply_memory_filter(y, 0.3, 25)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_per_coordinate_d(self, rng):
        history = rng.standard_normal((15, 2))
        out = apply_memory_filter(history, np.array([0.1, 0.4]), 10)
        assert out.shape == (2,)
        assert out[0] == pytest.approx(apply_memory_filter(history[:, 0], 0.1, 10))
        assert out[1] == pytest.approx(apply_memory_filter(history[:, 1], 0.4, 10))

    def test_empty_history(self):
        with pytest.raises(DomainError):
            apply_memory_filter(np.zeros(0), 0.3, 5)


class TestApplyFracdiff:
    def test_zero_d_is_identity(self, rng):
        x = rng.standard_normal(25)
        out = apply_fracdiff(x, 0.0, 10)
        assert_allclose(out, x)
        assert out is not x

    def test_single_sample(self):
        assert_allclose(apply_fracdiff(np.array([5.0]), 0.3, 10), [5.0])

    def test_matches_truncated_sum(self, rng):
        x = rng.standard_normal(40)
        w = frac_weights(0.4, 7).w
        expected = [sum(w[j] * x[t - j] for j in range(min(t, 7) + 1)) for t in range(40)]
        assert_allclose(apply_fracdiff(x, 0.4, 7), expected, atol=1e-12)

    def test_constant_series_tends_to_zero(self):
        ends = []
        for K in (10, 100, 1000):
            out = apply_fracdiff(np.full(K + 1, 3.0), 0.3, K)
            ends.append(out[-1])
            assert out[-1] == pytest.approx(3.0 * frac_weights(0.3, K).w.sum())
        assert all(e > 0 for e in ends)
        assert ends[0] > ends[1] > ends[2]

    def test_columns_filtered_independently(self, rng):
        x = rng.standard_normal((30, 2))
        out = apply_fracdiff(x, 0.2, 5)
        assert_allclose(out[:, 1], apply_fracdiff(x[:, 1], 0.2, 5))
