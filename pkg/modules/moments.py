"""
Conditional moments of the Wiener output y = h(z + v) + e.

Two independent paths are provided:

* closed form: h(z + v) is expanded as a polynomial in v and its moments are
  taken with E[v^2k] = (2k-1)!! var_v^k, accumulated with ``math.fsum``;
* quadrature: Gauss-Hermite expectations over v (and e for the fourth moment).

For a fixed sensor and noise level, ``MomentCalculator`` also carries the
predictor mean and variance as polynomials in z, which is what the CMP model
and the Fisher assembly evaluate over whole input records.
"""

import logging
import math
from functools import lru_cache
from typing import Literal, Optional

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel
from scipy.special import factorial2

from core.config import get_settings
from core.exceptions import DegenerateDistributionError, InvalidArgumentError
from modules.quadrature import (
    QuadratureRule,
    expect_gaussian,
    expect_gaussian2,
    hermite_rule,
)
from modules.sensor import PolynomialSensor
from modules.system import WienerModel

logger = logging.getLogger(__name__)

MomentMethod = Literal["closed", "quadrature"]
KappaSource = Literal["true", "model"]

# (2k-1)!! for k = 0..16, exact integers; moment order 32 covers h^4 at degree 8
MAX_MOMENT_ORDER = 32
_DOUBLE_FACTORIALS = [1] + [int(factorial2(2 * k - 1, exact=True)) for k in range(1, 17)]


class MomentReport(BaseModel):
    """Mean, variance, fourth central moment and kurtosis factor of y given z."""

    mean: float
    variance: float
    fourth: float
    kappa: float
    method: str = "closed"

    @property
    def kurtosis(self) -> float:
        return 2.0 * self.kappa + 1.0


def gaussian_moment(order: int, variance: float) -> float:
    """E[v^order] for v ~ Normal(0, variance)."""
    if order < 0 or order > MAX_MOMENT_ORDER:
        raise InvalidArgumentError(
            f"Gaussian moment order must lie in [0, {MAX_MOMENT_ORDER}], got {order}", "moments"
        )
    if order % 2:
        return 0.0
    k = order // 2
    return float(_DOUBLE_FACTORIALS[k]) * variance**k


def expect_polynomial(p: Polynomial, variance: float) -> float:
    """E[p(v)] for v ~ Normal(0, variance), exact up to rounding."""
    coefficients = np.atleast_1d(p.coef)
    return math.fsum(
        float(c) * gaussian_moment(k, variance)
        for k, c in enumerate(coefficients)
        if c != 0.0 and k % 2 == 0
    )


def gaussian_smooth(p: Polynomial, variance: float) -> Polynomial:
    """
    The polynomial z -> E[p(z + v)], v ~ Normal(0, variance).

    Uses the Taylor expansion E[p(z + v)] = sum_k p^(k)(z) E[v^k] / k!.
    """
    result = Polynomial([0.0])
    for k in range(0, p.degree() + 1, 2):
        weight = gaussian_moment(k, variance) / math.factorial(k)
        if weight:
            result = result + weight * p.deriv(k)
    return result


def _shifted_sensor(sensor: PolynomialSensor, z: float) -> Polynomial:
    """h(z + v) as a polynomial in v."""
    return sensor.polynomial(Polynomial([float(z), 1.0]))


def _residual_moments(residual: Polynomial, var_v: float, var_e: float):
    """
    Variance C and D = E[(eps^2 - C)^2] of eps = residual(v) + e.

    ``residual`` must have zero mean under v ~ Normal(0, var_v).
    """
    second = expect_polynomial(residual**2, var_v)
    fourth = expect_polynomial(residual**4, var_v)

    variance = second + var_e
    raw_fourth = math.fsum([fourth, 6.0 * second * var_e, 3.0 * var_e**2])
    return variance, max(raw_fourth - variance**2, 0.0)


def _kappa(variance: float, fourth: float) -> float:
    if variance <= 0.0:
        raise DegenerateDistributionError(
            "Predictive variance is zero; the kurtosis factor is undefined"
        )
    return fourth / (2.0 * variance**2)


def _default_rule(rule: Optional[QuadratureRule]) -> QuadratureRule:
    return rule if rule is not None else hermite_rule(get_settings().gh_order_moments)


def predictor_mean(
    model: WienerModel,
    z: float,
    method: MomentMethod = "closed",
    rule: Optional[QuadratureRule] = None,
) -> float:
    """
    Conditional mean predictor E_v{h(z + v)}.

    Args:
        model: Provides the sensor and var_v
        z: Noise-free linear output
        method: "closed" (Gaussian moments) or "quadrature"
        rule: Gauss-Hermite rule for the quadrature path

    Returns:
        float: Predicted output
    """
    if method == "quadrature":
        h = model.sensor
        return expect_gaussian(lambda v: h.eval(z + v), 0.0, model.var_v, _default_rule(rule))
    return expect_polynomial(_shifted_sensor(model.sensor, z), model.var_v)


def predictor_variance(
    model: WienerModel,
    z: float,
    method: MomentMethod = "closed",
    rule: Optional[QuadratureRule] = None,
) -> float:
    """
    Prediction error variance E_v{h(z + v)^2} - mean^2 + var_e.

    Args:
        model: Provides the sensor and both noise variances
        z: Noise-free linear output
        method: "closed" (Gaussian moments) or "quadrature"
        rule: Gauss-Hermite rule for the quadrature path
    """
    if method == "quadrature":
        h = model.sensor
        rule = _default_rule(rule)
        mean = expect_gaussian(lambda v: h.eval(z + v), 0.0, model.var_v, rule)
        spread = expect_gaussian(lambda v: (h.eval(z + v) - mean) ** 2, 0.0, model.var_v, rule)
        return spread + model.var_e

    shifted = _shifted_sensor(model.sensor, z)
    residual = shifted - expect_polynomial(shifted, model.var_v)
    return expect_polynomial(residual**2, model.var_v) + model.var_e


def fourth_and_kappa(
    model: WienerModel,
    z: float,
    method: MomentMethod = "closed",
    rule: Optional[QuadratureRule] = None,
) -> MomentReport:
    """
    Mean, variance, fourth moment D = E{[(y - mean)^2 - C]^2} and kappa = D / (2 C^2).

    The quadrature path integrates over v and e with ``expect_gaussian2``.

    Raises:
        DegenerateDistributionError: If the predictive variance is zero
    """
    if method == "quadrature":
        h = model.sensor
        rule = _default_rule(rule)
        mean = predictor_mean(model, z, "quadrature", rule)
        variance = predictor_variance(model, z, "quadrature", rule)
        if variance <= 0.0:
            raise DegenerateDistributionError(f"Predictive variance is zero at z={z}")
        fourth = expect_gaussian2(
            lambda v, e: ((h.eval(z + v) + e - mean) ** 2 - variance) ** 2,
            0.0,
            model.var_v,
            0.0,
            model.var_e,
            rule,
        )
        return MomentReport(
            mean=mean, variance=variance, fourth=fourth,
            kappa=_kappa(variance, fourth), method="quadrature",
        )

    shifted = _shifted_sensor(model.sensor, z)
    mean = expect_polynomial(shifted, model.var_v)
    variance, fourth = _residual_moments(shifted - mean, model.var_v, model.var_e)
    if variance <= 0.0:
        raise DegenerateDistributionError(f"Predictive variance is zero at z={z}")
    return MomentReport(
        mean=mean, variance=variance, fourth=fourth,
        kappa=_kappa(variance, fourth), method="closed",
    )


def second_order_residual(sensor: PolynomialSensor, z: float, var_v: float) -> Polynomial:
    """h'(z) v + h''(z) (v^2 - var_v) / 2 as a polynomial in v."""
    d1 = sensor.eval(z, 1)
    d2 = sensor.eval(z, 2)
    return Polynomial([-0.5 * d2 * var_v, d1, 0.5 * d2])


def residual_kappa(model: WienerModel, z: float, source: KappaSource = "true") -> float:
    """
    Kurtosis factor of the prediction residual.

    Args:
        model: Wiener model
        z: Noise-free linear output
        source: "true" uses the exact residual h(z + v) + e - mean; "model"
            uses the second-order residual h'v + h''(v^2 - var_v)/2 + e

    Raises:
        DegenerateDistributionError: If the residual variance is zero
    """
    if source == "true":
        return fourth_and_kappa(model, z).kappa
    if source == "model":
        variance, fourth = _residual_moments(
            second_order_residual(model.sensor, z, model.var_v), model.var_v, model.var_e
        )
        return _kappa(variance, fourth)
    raise InvalidArgumentError(f"Unknown kappa source: {source}", "moments")


class MomentCalculator:
    """Predictor mean and variance as polynomials in z for one sensor and noise level."""

    def __init__(self, sensor: PolynomialSensor, var_v: float, var_e: float):
        """
        Args:
            sensor: Polynomial sensor
            var_v: Process noise variance
            var_e: Measurement noise variance
        """
        h = sensor.polynomial
        self.sensor = sensor
        self.var_v = float(var_v)
        self.var_e = float(var_e)

        self.mean_poly = gaussian_smooth(h, self.var_v)
        second = gaussian_smooth(h * h, self.var_v)
        self.variance_poly = second - self.mean_poly * self.mean_poly + self.var_e

        self.mean_slope = self.mean_poly.deriv(1)
        self.variance_slope = self.variance_poly.deriv(1)

    def mean(self, z: np.ndarray) -> np.ndarray:
        return self.mean_poly(np.asarray(z, dtype=float))

    def variance(self, z: np.ndarray) -> np.ndarray:
        return self.variance_poly(np.asarray(z, dtype=float))

    def mean_derivative(self, z: np.ndarray) -> np.ndarray:
        return self.mean_slope(np.asarray(z, dtype=float))

    def variance_derivative(self, z: np.ndarray) -> np.ndarray:
        return self.variance_slope(np.asarray(z, dtype=float))


@lru_cache(maxsize=128)
def get_moment_calculator(
    sensor: PolynomialSensor, var_v: float, var_e: float
) -> MomentCalculator:
    """Cached calculator per (sensor, var_v, var_e)."""
    return MomentCalculator(sensor, var_v, var_e)
