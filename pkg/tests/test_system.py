import numpy as np
import pytest
from pydantic import ValidationError

from core.exceptions import InvalidArgumentError
from modules.moments import predictor_mean, predictor_variance
from modules.sensor import PolynomialSensor
from modules.system import (
    Dataset,
    WienerModel,
    constant_input,
    linear_output,
    linear_outputs,
    regressor,
    simulate,
)
from tests.conftest import make_model


def test_regressor_has_zero_initial_conditions():
    np.testing.assert_array_equal(regressor([1.0, 2.0, 3.0], 2), [[1.0, 0.0], [2.0, 1.0], [3.0, 2.0]])


def test_linear_output_examples():
    model = make_model(PolynomialSensor.linear(), theta=(1.0, 2.0))
    assert linear_output(model, [1.0, 0.0, 0.0], 2) == 2.0
    assert linear_output(make_model(PolynomialSensor.linear(), theta=(0.5,)), [4.0], 1) == 2.0


def test_constant_model_output_is_the_mean():
    model = make_model(PolynomialSensor.linear(), theta=(0.8,))
    np.testing.assert_allclose(linear_outputs(model, constant_input(5)), 0.8)


@pytest.mark.parametrize("t", [0, 4])
def test_linear_output_index_out_of_range(t):
    with pytest.raises(InvalidArgumentError):
        linear_output(make_model(PolynomialSensor.linear()), [1.0, 2.0, 3.0], t)


def test_simulate_is_deterministic():
    model = make_model(PolynomialSensor.cubic(), var_v=0.5, var_e=0.5)
    u = constant_input(50)
    first = simulate(model, u, 42)
    assert simulate(model, u, 42).y == first.y
    assert simulate(model, u, 43).y != first.y
    assert first.seed == 42


def test_noiseless_simulation():
    u = constant_input(10)
    linear = simulate(make_model(PolynomialSensor.linear(), var_v=0.0, var_e=0.0), u, 1)
    quadratic = simulate(make_model(PolynomialSensor.quadratic(), var_v=0.0, var_e=0.0), u, 1)
    assert set(linear.y) == {1.0}
    assert set(quadratic.y) == {0.5}


def test_simulated_mean_of_squared_process_noise():
    model = make_model(PolynomialSensor.quadratic(), theta=(0.0,), var_v=1.0, var_e=0.0)
    data = simulate(model, np.zeros(1_000_000), 7)
    assert np.mean(data.y_array) == pytest.approx(0.5, abs=0.005)


def test_simulated_moments_match_predictor():
    model = make_model(PolynomialSensor.cubic(), var_v=0.5, var_e=0.25)
    n = 200_000
    y = simulate(model, constant_input(n), 2024).y_array
    mean, variance = predictor_mean(model, 1.0), predictor_variance(model, 1.0)
    assert abs(y.mean() - mean) < 4.0 * np.sqrt(variance / n)
    assert y.var() == pytest.approx(variance, rel=0.05)


@pytest.mark.parametrize("seed", [-1, 2**64, 1.5])
def test_invalid_seed(seed):
    with pytest.raises(InvalidArgumentError):
        simulate(make_model(PolynomialSensor.linear()), [1.0], seed)


def test_dataset_lengths_must_match():
    with pytest.raises(ValidationError):
        Dataset(u=(1.0, 2.0), y=(1.0,))


def test_model_validation():
    with pytest.raises(ValidationError):
        WienerModel(theta=(), sensor=PolynomialSensor.linear(), var_v=1.0, var_e=1.0)
    with pytest.raises(ValidationError):
        WienerModel(theta=(1.0,), sensor=PolynomialSensor.linear(), var_v=-1.0, var_e=1.0)


def test_model_from_json_sugar():
    model = WienerModel.model_validate(
        {"theta": [1.0], "sensor": {"kind": "cubic"}, "var_v": 0.1, "var_e": 0.1}
    )
    assert model.sensor == PolynomialSensor.cubic()
    assert model.with_theta([2.0]).theta == (2.0,)
