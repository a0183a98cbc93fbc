import math

import numpy as np
import pytest
from scipy.special import logsumexp

from core.exceptions import InvalidArgumentError
from modules.quadrature import (
    LOG_SQRT_PI,
    SQRT_PI,
    expect_gaussian,
    expect_gaussian2,
    gaussian_points,
    hermite_rule,
    log_expect_gaussian,
)


def standard_moment(k: int) -> float:
    """E[X^k] for X ~ Normal(0, 1)."""
    if k % 2:
        return 0.0
    return float(math.prod(range(k - 1, 0, -2)))


def test_order_two_rule():
    rule = hermite_rule(2)
    np.testing.assert_allclose(rule.nodes, [-1 / np.sqrt(2), 1 / np.sqrt(2)], rtol=1e-15)
    np.testing.assert_allclose(rule.weights, [SQRT_PI / 2, SQRT_PI / 2], rtol=1e-14)


def test_order_one_rule():
    rule = hermite_rule(1)
    assert rule.nodes.tolist() == [0.0]
    assert rule.weights[0] == pytest.approx(SQRT_PI, rel=1e-15)


@pytest.mark.parametrize("order", [3, 10, 40, 100])
def test_rule_is_symmetric_and_sums_to_sqrt_pi(order):
    rule = hermite_rule(order)
    assert np.all(np.diff(rule.nodes) > 0)
    np.testing.assert_array_equal(rule.nodes, -rule.nodes[::-1])
    np.testing.assert_array_equal(rule.weights, rule.weights[::-1])
    assert rule.weights.sum() == pytest.approx(SQRT_PI, rel=1e-12)


def test_exactness_up_to_degree_2n_minus_1():
    for order in range(1, 65):
        rule = hermite_rule(order)
        for k in range(2 * order):
            value = expect_gaussian(lambda x: x**k, 0.0, 1.0, rule)
            if k % 2:
                assert abs(value) <= 1e-9 * standard_moment(k + 1)
            else:
                assert value == pytest.approx(standard_moment(k), rel=1e-9)


def test_high_order_log_weights_stay_finite():
    rule = hermite_rule(1000)
    assert np.all(np.isfinite(rule.log_weights))
    assert rule.weights.min() == 0.0
    assert logsumexp(rule.log_weights) == pytest.approx(LOG_SQRT_PI, abs=1e-8)


@pytest.mark.slow
def test_maximum_order_rule():
    rule = hermite_rule(10000)
    assert rule.order == 10000
    assert np.all(np.isfinite(rule.log_weights))
    assert logsumexp(rule.log_weights) == pytest.approx(LOG_SQRT_PI, abs=1e-7)


@pytest.mark.parametrize("order", [0, -3, 10001, 2.5])
def test_invalid_order(order):
    with pytest.raises(InvalidArgumentError):
        hermite_rule(order)


def test_rule_arrays_are_read_only():
    rule = hermite_rule(5)
    with pytest.raises(ValueError):
        rule.nodes[0] = 1.0


def test_expect_gaussian_examples():
    assert expect_gaussian(lambda x: x**2, 0.0, 1.0, hermite_rule(2)) == pytest.approx(1.0)
    cubic_mean = expect_gaussian(lambda v: (1.0 + v) ** 3 / 3.0, 0.0, 1.0, hermite_rule(2))
    assert cubic_mean == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert expect_gaussian(np.exp, 0.0, 1.0, hermite_rule(20)) == pytest.approx(np.exp(0.5), abs=1e-6)


def test_expect_gaussian_zero_variance_returns_f_of_mean():
    assert expect_gaussian(lambda x: x**3 + 1.0, 2.0, 0.0, hermite_rule(10)) == 9.0


def test_expect_gaussian_scaling_invariance():
    rule = hermite_rule(30)
    f = lambda x: np.sin(x) + x**4
    m, s2 = 0.7, 2.5
    direct = expect_gaussian(f, m, s2, rule)
    standardized = expect_gaussian(lambda t: f(m + np.sqrt(s2) * t), 0.0, 1.0, rule)
    assert direct == pytest.approx(standardized, rel=1e-12)


def test_expect_gaussian_negative_variance():
    with pytest.raises(InvalidArgumentError):
        expect_gaussian(lambda x: x, 0.0, -1.0, hermite_rule(3))


def test_expect_gaussian2_examples():
    rule = hermite_rule(4)
    assert expect_gaussian2(lambda v, e: v * e, 0.0, 0.3, 0.0, 2.0, rule) == pytest.approx(0.0, abs=1e-14)
    assert expect_gaussian2(lambda v, e: (v + e) ** 2, 0.0, 0.5, 0.0, 0.5, rule) == pytest.approx(1.0)
    assert expect_gaussian2(lambda v, e: v**2 * e**2, 0.0, 1.0, 0.0, 2.0, rule) == pytest.approx(2.0)


def test_expect_gaussian2_negative_variance():
    with pytest.raises(InvalidArgumentError):
        expect_gaussian2(lambda v, e: v, 0.0, 1.0, 0.0, -0.1, hermite_rule(3))


def test_log_expect_gaussian_matches_lognormal_mean():
    value = log_expect_gaussian(lambda x: x, 0.0, 1.0, hermite_rule(40))
    assert value == pytest.approx(0.5, abs=1e-10)


def test_log_expect_gaussian_survives_underflow():
    # exp(-1000 - x^2) underflows pointwise; the log-domain sum does not
    value = log_expect_gaussian(lambda x: -1000.0 - x**2, 0.0, 0.5, hermite_rule(40))
    assert np.isfinite(value)
    assert value == pytest.approx(-1000.0 + 0.5 * np.log(0.5), abs=1e-10)


def test_gaussian_points_collapse_at_zero_variance():
    points, probabilities, log_probabilities = gaussian_points(1.5, 0.0, hermite_rule(8))
    assert points.tolist() == [1.5]
    assert probabilities.tolist() == [1.0]
    assert log_probabilities.tolist() == [0.0]


def test_log_expect_gaussian_is_vectorized():
    means = np.array([0.0, 1.0, -2.0])
    variances = np.array([1.0, 0.5, 0.0])
    values = log_expect_gaussian(lambda x: x, means, variances, hermite_rule(30))
    assert values.shape == (3,)
    np.testing.assert_allclose(values, means + variances / 2.0, atol=1e-10)
