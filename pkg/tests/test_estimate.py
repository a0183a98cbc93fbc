import numpy as np
import pytest

from core.exceptions import EvaluationError, InvalidArgumentError
from modules.estimate import (
    POSITIVE_LOWER_BOUND,
    FitOptions,
    fit,
    initial_theta,
    minimize_scalar,
    minimize_simplex,
    safe_fit,
)
from modules.sensor import PolynomialSensor
from modules.system import constant_input, simulate
from tests.conftest import make_model


class TestMinimizeScalar:
    def test_parabola(self):
        found = minimize_scalar(lambda x: (x - 2.0) ** 2, 0.0, 5.0)
        assert found.argmin == pytest.approx(2.0, abs=1e-6)
        assert found.value == pytest.approx(0.0, abs=1e-10)
        assert found.converged

    def test_quartic(self):
        found = minimize_scalar(lambda x: x**4 - x, 0.0, 2.0)
        assert found.argmin == pytest.approx(0.25 ** (1.0 / 3.0), abs=1e-5)

    def test_constant_returns_midpoint(self):
        assert minimize_scalar(lambda x: 3.0, -1.0, 2.0).argmin == 0.5

    def test_stays_in_bracket(self):
        found = minimize_scalar(lambda x: x, 1.0, 3.0)
        assert 1.0 <= found.argmin <= 3.0
        assert found.argmin == pytest.approx(1.0, abs=1e-6)

    def test_invalid_bracket(self):
        with pytest.raises(InvalidArgumentError):
            minimize_scalar(lambda x: x, 1.0, 1.0)

    def test_non_finite_objective(self):
        with pytest.raises(EvaluationError):
            minimize_scalar(lambda x: np.nan, 0.0, 1.0)


class TestMinimizeSimplex:
    def test_quadratic_bowl(self):
        found = minimize_simplex(lambda x: (x[0] - 1.0) ** 2 + (x[1] - 2.0) ** 2, [0.0, 0.0])
        np.testing.assert_allclose(found.argmin, [1.0, 2.0], atol=1e-5)
        assert found.converged

    def test_rosenbrock(self):
        def rosenbrock(x):
            return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2

        found = minimize_simplex(rosenbrock, [-1.2, 1.0], max_iter=500)
        np.testing.assert_allclose(found.argmin, [1.0, 1.0], atol=1e-4)
        assert found.iterations <= 500

    def test_iteration_cap(self):
        found = minimize_simplex(lambda x: float(np.sum(x**2)), [5.0, 5.0, 5.0], max_iter=3)
        assert found.iterations <= 3
        assert not found.converged


class TestFit:
    def test_noiseless_fir_recovery(self, rng):
        model = make_model(PolynomialSensor.cubic(), theta=(0.8, -0.3), var_v=0.0, var_e=1e-8)
        u = rng.normal(size=200)
        data = simulate(model, u, 1)
        result = fit(u, data.y_array, model.with_theta([0.0, 0.0]), "cmp")
        np.testing.assert_allclose(result.theta_hat, [0.8, -0.3], atol=1e-4)
        assert result.cost <= result.initial_cost

    def test_exact_ml_scalar(self):
        truth = make_model(PolynomialSensor.cubic(), var_v=0.1, var_e=0.1)
        u = constant_input(1000)
        data = simulate(truth, u, 2024)
        result = fit(u, data.y_array, truth, "exact-ml", FitOptions(positive=True, gh_order=60))
        assert result.method == "exact-ml"
        assert result.theta_hat[0] == pytest.approx(1.0, abs=0.06)
        assert result.bracket_or_simplex["bracket"][0] >= POSITIVE_LOWER_BOUND

    def test_positive_fit_resolves_sign(self):
        truth = make_model(PolynomialSensor.quadratic(), var_v=0.1, var_e=0.1)
        u = constant_input(1000)
        data = simulate(truth, u, 99)
        result = fit(u, data.y_array, truth, "gauss2", FitOptions(positive=True))
        assert result.theta_hat[0] == pytest.approx(1.0, abs=0.08)

    def test_positive_start_inverts_even_sensor(self):
        truth = make_model(PolynomialSensor.quadratic(), theta=(1.5,), var_v=0.0, var_e=0.0)
        u = constant_input(20)
        y = simulate(truth, u, 5).y_array
        assert initial_theta(truth, u, y, FitOptions(positive=True))[0] == pytest.approx(1.5, abs=1e-10)
        assert initial_theta(truth, u, y, FitOptions()).tolist() == [0.0]

    def test_user_start(self, cubic_model):
        u = constant_input(50)
        data = simulate(cubic_model, u, 4)
        options = FitOptions(theta0=[1.2])
        assert initial_theta(cubic_model, u, data.y_array, options).tolist() == [1.2]
        with pytest.raises(InvalidArgumentError):
            initial_theta(cubic_model, u, data.y_array, FitOptions(theta0=[1.0, 2.0]))

    def test_unknown_method(self, cubic_model):
        with pytest.raises(InvalidArgumentError):
            fit([1.0], [1.0], cubic_model, "least-squares")

    def test_safe_fit_swallows_library_errors(self, cubic_model):
        u = constant_input(5)
        assert safe_fit(u, u, cubic_model, "cmp", FitOptions(theta0=[1.0, 2.0])) is None


@pytest.mark.parametrize("method", ["exact-ml", "gauss1", "gauss2", "cmp"])
def test_noiseless_linear_sensor_every_method(method):
    truth = make_model(PolynomialSensor.linear(), var_v=0.0, var_e=0.0)
    u = constant_input(100)
    data = simulate(truth, u, 3)
    template = truth.with_variances(1e-6, 1e-6)
    result = fit(u, data.y_array, template, method, FitOptions(gh_order=40))
    assert result.theta_hat[0] == pytest.approx(1.0, abs=1e-6)
