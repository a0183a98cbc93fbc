import numpy as np
import pytest

from core.config import Settings
from modules.sensor import PolynomialSensor
from modules.system import WienerModel


def make_model(sensor: PolynomialSensor, theta=(1.0,), var_v: float = 1.0, var_e: float = 1.0):
    return WienerModel(theta=tuple(theta), sensor=sensor, var_v=var_v, var_e=var_e)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quadratic_model():
    return make_model(PolynomialSensor.quadratic())


@pytest.fixture
def cubic_model():
    return make_model(PolynomialSensor.cubic())


@pytest.fixture
def linear_model():
    return make_model(PolynomialSensor.linear())


@pytest.fixture
def settings():
    return Settings(threads=1, _env_file=None)
