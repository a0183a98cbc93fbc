import numpy as np
import pytest
from pydantic import ValidationError

from core.exceptions import InvalidArgumentError, NonInvertibleError, OutOfRangeError
from modules.sensor import PolynomialSensor


def test_quadratic_eval_and_derivatives():
    h = PolynomialSensor.quadratic()
    assert [h.eval(2.0, k) for k in range(4)] == [2.0, 2.0, 1.0, 0.0]


def test_cubic_gain_normalization():
    assert PolynomialSensor.cubic().eval(1.0, 1) == pytest.approx(1.0)


def test_linear_sensor():
    h = PolynomialSensor.linear(3.0)
    assert h.eval(-1.0) == -3.0
    assert h.eval(-1.0, 1) == 3.0
    assert h.eval(-1.0, 2) == 0.0


def test_eval_vectorized():
    h = PolynomialSensor.square()
    np.testing.assert_array_equal(h.eval(np.array([-2.0, 0.0, 3.0])), [4.0, 0.0, 9.0])


@pytest.mark.parametrize("order", [-1, 4])
def test_eval_rejects_derivative_order(order):
    with pytest.raises(InvalidArgumentError):
        PolynomialSensor.cubic().eval(1.0, order)


def test_derivatives_match_central_differences(rng):
    step = 1e-5
    for _ in range(50):
        degree = int(rng.integers(0, 6))
        h = PolynomialSensor(coefficients=tuple(rng.normal(size=degree + 1)))
        x = float(rng.uniform(-3.0, 3.0))
        for k in (1, 2, 3):
            numeric = (h.eval(x + step, k - 1) - h.eval(x - step, k - 1)) / (2 * step)
            assert h.eval(x, k) == pytest.approx(numeric, rel=1e-4, abs=1e-6)


def test_derivative_sensor():
    d = PolynomialSensor.cubic().derivative(1)
    assert d.coefficients == (0.0, 0.0, 1.0)


def test_trailing_zeros_are_trimmed():
    h = PolynomialSensor(coefficients=(1.0, 2.0, 0.0, 0.0))
    assert h.degree == 1
    assert h.coefficients == (1.0, 2.0)


def test_degree_cap():
    with pytest.raises(ValidationError):
        PolynomialSensor(coefficients=tuple([1.0] * 10))


def test_json_sugar():
    assert PolynomialSensor.model_validate({"kind": "linear", "gain": 2}).coefficients == (0.0, 2.0)
    assert PolynomialSensor.model_validate({"kind": "quadratic"}) == PolynomialSensor.quadratic()
    poly = PolynomialSensor.model_validate({"kind": "poly", "coefficients": [1, 0, 3]})
    assert poly.coefficients == (1.0, 0.0, 3.0)
    assert PolynomialSensor.model_validate(poly.to_spec()) == poly


def test_unknown_kind_is_rejected():
    with pytest.raises(ValidationError):
        PolynomialSensor.model_validate({"kind": "sigmoid"})


def test_sensors_are_hashable():
    assert hash(PolynomialSensor.cubic()) == hash(PolynomialSensor.cubic())


def test_monotonicity():
    assert PolynomialSensor.cubic().is_monotone((-2.0, 2.0))
    assert not PolynomialSensor.square().is_monotone((-1.0, 1.0))
    assert PolynomialSensor.square().is_monotone((0.1, 3.0))
    assert not PolynomialSensor(coefficients=(0.0,)).is_monotone((0.0, 1.0))


def test_inverse_examples():
    assert PolynomialSensor.cubic().inverse(9.0, (0.0, 10.0)) == pytest.approx(3.0, abs=1e-12)
    assert PolynomialSensor.linear(2.0).inverse(5.0, (-10.0, 10.0)) == pytest.approx(2.5, abs=1e-12)


def test_inverse_of_decreasing_sensor():
    h = PolynomialSensor(coefficients=(1.0, -2.0))
    assert h.inverse(-3.0, (-5.0, 5.0)) == pytest.approx(2.0, abs=1e-12)


def test_inverse_array_round_trips(rng):
    h = PolynomialSensor.cubic()
    x = rng.uniform(-2.0, 2.0, size=200)
    np.testing.assert_allclose(h.inverse_array(h.eval(x), (-2.0, 2.0)), x, atol=1e-9)


def test_quadratic_is_not_invertible_on_symmetric_bracket():
    with pytest.raises(NonInvertibleError):
        PolynomialSensor.quadratic().inverse(0.25, (-1.0, 1.0))


def test_inverse_out_of_range():
    with pytest.raises(OutOfRangeError):
        PolynomialSensor.cubic().inverse(1000.0, (0.0, 1.0))


def test_invertible_bracket_expands_to_cover_targets():
    h = PolynomialSensor.cubic()
    lower, upper = h.invertible_bracket([-500.0, 1000.0], (-1.0, 1.0))
    low, high = h.image((lower, upper))
    assert low <= -500.0 and high >= 1000.0


def test_invalid_bracket():
    with pytest.raises(InvalidArgumentError):
        PolynomialSensor.cubic().inverse(0.0, (1.0, 1.0))


@pytest.mark.parametrize(
    "sensor, bracket",
    [
        (PolynomialSensor.cubic(), (-3.0, 3.0)),
        (PolynomialSensor.linear(-2.5), (-10.0, 10.0)),
        (PolynomialSensor(coefficients=(0.5, -1.0, 0.0, -0.2)), (-4.0, 4.0)),
        (PolynomialSensor(coefficients=(0.0, 0.1, 0.3, 0.4)), (0.0, 5.0)),
    ],
)
def test_inverse_round_trip_on_monotone_sensors(sensor, bracket, rng):
    x = rng.uniform(bracket[0], bracket[1], size=1000)
    recovered = np.array([sensor.inverse(value, bracket) for value in sensor.eval(x)])
    np.testing.assert_allclose(recovered, x, atol=1e-10, rtol=0.0)


def test_bracket_widens_upward_only():
    h = PolynomialSensor.quadratic()
    lower, upper = h.invertible_bracket([50.0], (1e-6, 2.0), keep_lower=True)
    assert lower == 1e-6
    assert h.eval(upper) >= 50.0
