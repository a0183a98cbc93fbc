import numpy as np
import pytest

from core.exceptions import DegenerateDistributionError, InvalidArgumentError
from modules.moments import (
    MomentCalculator,
    fourth_and_kappa,
    gaussian_moment,
    predictor_mean,
    predictor_variance,
    residual_kappa,
)
from modules.quadrature import hermite_rule
from modules.sensor import PolynomialSensor
from tests.conftest import make_model


def quadratic_kappa(s: float) -> float:
    """kappa of the quadratic sensor at z = 1 with var_e = var_v = s."""
    return (8.0 + 16.0 * s + 3.5 * s**2) / (8.0 + 4.0 * s + 0.5 * s**2)


def test_gaussian_moments():
    assert [gaussian_moment(k, 2.0) for k in range(7)] == [1.0, 0.0, 2.0, 0.0, 12.0, 0.0, 120.0]
    with pytest.raises(InvalidArgumentError):
        gaussian_moment(33, 1.0)


def test_predictor_mean_examples():
    assert predictor_mean(make_model(PolynomialSensor.quadratic()), 1.0) == pytest.approx(1.0)
    assert predictor_mean(make_model(PolynomialSensor.cubic()), 1.0) == pytest.approx(4.0 / 3.0)
    noiseless = make_model(PolynomialSensor.cubic(), var_v=0.0)
    assert predictor_mean(noiseless, 2.0) == pytest.approx(8.0 / 3.0)


def test_predictor_variance_examples():
    quadratic = make_model(PolynomialSensor.quadratic(), var_v=0.5, var_e=0.5)
    assert predictor_variance(quadratic, 1.0) == pytest.approx(1.125)
    assert predictor_variance(make_model(PolynomialSensor.cubic()), 1.0) == pytest.approx(23.0 / 3.0)
    linear = make_model(PolynomialSensor.linear(3.0), var_v=0.2, var_e=0.7)
    assert predictor_variance(linear, -4.0) == pytest.approx(9.0 * 0.2 + 0.7)


def test_linear_sensor_is_gaussian():
    report = fourth_and_kappa(make_model(PolynomialSensor.linear(2.0), var_v=0.3, var_e=0.4), 0.5)
    assert report.kappa == pytest.approx(1.0, rel=1e-12)
    assert report.kurtosis == pytest.approx(3.0)


def test_square_sensor_chi_squared_kurtosis():
    report = fourth_and_kappa(make_model(PolynomialSensor.square(), var_v=1.0, var_e=0.0), 0.0)
    assert report.kappa == pytest.approx(7.0, rel=1e-12)
    assert report.kurtosis == pytest.approx(15.0)


@pytest.mark.parametrize("s, expected", [(1.0, 2.2), (0.5, 5.0 / 3.0), (0.25, quadratic_kappa(0.25))])
def test_quadratic_kappa(s, expected):
    model = make_model(PolynomialSensor.quadratic(), var_v=s, var_e=s)
    assert fourth_and_kappa(model, 1.0).kappa == pytest.approx(expected, rel=1e-12)


def test_kappa_tends_to_one_without_process_noise():
    model = make_model(PolynomialSensor.cubic(), var_v=1e-8, var_e=0.5)
    assert fourth_and_kappa(model, 1.0).kappa == pytest.approx(1.0, abs=1e-4)


def test_closed_form_and_quadrature_agree(rng):
    rule = hermite_rule(40)
    for _ in range(200):
        degree = int(rng.integers(1, 5))
        sensor = PolynomialSensor(coefficients=tuple(rng.normal(size=degree + 1)))
        model = make_model(sensor, var_v=float(rng.uniform(0.01, 2.0)), var_e=float(rng.uniform(0.01, 1.0)))
        z = float(rng.uniform(-2.0, 2.0))

        closed = fourth_and_kappa(model, z, "closed")
        numeric = fourth_and_kappa(model, z, "quadrature", rule)
        assert numeric.mean == pytest.approx(closed.mean, rel=1e-8, abs=1e-10)
        assert numeric.variance == pytest.approx(closed.variance, rel=1e-8)
        assert numeric.fourth == pytest.approx(closed.fourth, rel=1e-8)


def test_degenerate_distribution():
    model = make_model(PolynomialSensor.cubic(), var_v=0.0, var_e=0.0)
    with pytest.raises(DegenerateDistributionError):
        fourth_and_kappa(model, 1.0)


def test_model_residual_kappa_for_quadratic_is_exact():
    model = make_model(PolynomialSensor.quadratic(), var_v=0.75, var_e=0.75)
    assert residual_kappa(model, 1.0, "model") == pytest.approx(residual_kappa(model, 1.0, "true"), rel=1e-12)


def test_model_residual_kappa_for_cubic_differs():
    model = make_model(PolynomialSensor.cubic())
    assert residual_kappa(model, 1.0, "model") == pytest.approx(4.0, rel=1e-12)
    assert residual_kappa(model, 1.0, "true") > 10.0


def test_unknown_kappa_source():
    with pytest.raises(InvalidArgumentError):
        residual_kappa(make_model(PolynomialSensor.cubic()), 1.0, "sampled")


def test_moment_calculator_matches_pointwise_moments():
    model = make_model(PolynomialSensor(coefficients=(0.5, -1.0, 0.3, 0.2)), var_v=0.4, var_e=0.1)
    calculator = MomentCalculator(model.sensor, model.var_v, model.var_e)
    z = np.linspace(-2.0, 2.0, 9)
    np.testing.assert_allclose(calculator.mean(z), [predictor_mean(model, x) for x in z], rtol=1e-12)
    np.testing.assert_allclose(calculator.variance(z), [predictor_variance(model, x) for x in z], rtol=1e-12)

    step = 1e-6
    numeric = (calculator.variance(z + step) - calculator.variance(z - step)) / (2 * step)
    np.testing.assert_allclose(calculator.variance_derivative(z), numeric, rtol=1e-6, atol=1e-8)
