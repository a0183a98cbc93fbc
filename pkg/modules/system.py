"""
Stochastic Wiener model: FIR dynamics, white process noise, polynomial sensor,
white measurement noise.

    z_t = sum_k g_k u_{t-k} + v_t,    y_t = h(z_t) + e_t

Simulation draws standard normals from ``numpy.random.Generator(PCG64(seed))``:
all N process-noise draws first, then all N measurement-noise draws, each
scaled by the corresponding standard deviation.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.linalg import toeplitz

from core.exceptions import InvalidArgumentError
from modules.sensor import PolynomialSensor
from utils.validation import as_finite_array

logger = logging.getLogger(__name__)

SEED_LIMIT = 2**64


class WienerModel(BaseModel):
    """FIR impulse response, known sensor and known noise variances."""

    model_config = ConfigDict(frozen=True)

    theta: Tuple[float, ...] = Field(min_length=1)
    sensor: PolynomialSensor
    var_v: float = Field(ge=0.0)
    var_e: float = Field(ge=0.0)

    @field_validator("theta")
    @classmethod
    def validate_theta(cls, v):
        """FIR coefficients must be finite."""
        if not all(np.isfinite(v)):
            raise ValueError("FIR coefficients must be finite")
        return tuple(float(g) for g in v)

    @property
    def nb(self) -> int:
        return len(self.theta)

    @property
    def theta_array(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)

    def with_theta(self, theta: Sequence[float]) -> "WienerModel":
        """Same sensor and noise, different FIR coefficients."""
        return self.model_copy(update={"theta": tuple(float(g) for g in theta)})

    def with_variances(self, var_v: float, var_e: float) -> "WienerModel":
        return WienerModel(theta=self.theta, sensor=self.sensor, var_v=var_v, var_e=var_e)


class Dataset(BaseModel):
    """Input/output record of N samples."""

    model_config = ConfigDict(frozen=True)

    u: Tuple[float, ...] = Field(min_length=1)
    y: Tuple[float, ...] = Field(min_length=1)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def validate_lengths(self):
        """u and y describe the same samples."""
        if len(self.u) != len(self.y):
            raise ValueError(f"u and y lengths differ: {len(self.u)} != {len(self.y)}")
        return self

    @classmethod
    def from_arrays(
        cls, u: np.ndarray, y: np.ndarray, seed: Optional[int] = None
    ) -> "Dataset":
        return cls(
            u=tuple(np.asarray(u, dtype=float).tolist()),
            y=tuple(np.asarray(y, dtype=float).tolist()),
            seed=seed,
        )

    @property
    def n_samples(self) -> int:
        return len(self.y)

    @property
    def u_array(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float)

    @property
    def y_array(self) -> np.ndarray:
        return np.asarray(self.y, dtype=float)


def constant_input(n_samples: int, level: float = 1.0) -> np.ndarray:
    """Input u_t = level for t = 1..N (the scalar-mean experiments use level 1)."""
    if n_samples < 1:
        raise InvalidArgumentError(f"Number of samples must be >= 1, got {n_samples}", "system")
    return np.full(int(n_samples), float(level))


def regressor(u: Sequence[float], nb: int) -> np.ndarray:
    """
    FIR regressor matrix with zero initial conditions.

    Returns:
        np.ndarray: (N, nb) matrix with entry [t, k] = u_{t-k}, zero for t < k
    """
    u = as_finite_array(u, "u", "system")
    first_row = np.zeros(nb)
    first_row[0] = u[0]
    return toeplitz(u, first_row)


def linear_outputs(model: WienerModel, u: Sequence[float]) -> np.ndarray:
    """Noise-free linear block output z_t(theta) for every sample."""
    return regressor(u, model.nb) @ model.theta_array


def linear_output(model: WienerModel, u: Sequence[float], t: int) -> float:
    """
    Noise-free linear block output at one sample.

    Args:
        model: Wiener model
        u: Input sequence
        t: One-based sample index, 1 <= t <= len(u)

    Raises:
        InvalidArgumentError: If t is out of range
    """
    u = as_finite_array(u, "u", "system")
    if not 1 <= t <= len(u):
        raise InvalidArgumentError(f"Sample index {t} outside [1, {len(u)}]", "system")

    taps = min(model.nb, t)
    past = u[t - taps:t][::-1]
    return float(np.dot(model.theta_array[:taps], past))


def validate_seed(seed: int) -> int:
    """Seeds are unsigned 64-bit integers."""
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= int(seed) < SEED_LIMIT:
        raise InvalidArgumentError(f"Seed must be an unsigned 64-bit integer, got {seed}", "system")
    return int(seed)


def simulate(model: WienerModel, u: Sequence[float], seed: int) -> Dataset:
    """
    Simulate y_t = h(z_t + v_t) + e_t.

    Identical (model, u, seed) give bit-identical datasets.

    Args:
        model: True system
        u: Input sequence
        seed: Unsigned 64-bit generator seed

    Returns:
        Dataset: Input, output and the seed used
    """
    seed = validate_seed(seed)
    u = as_finite_array(u, "u", "system")

    rng = np.random.Generator(np.random.PCG64(seed))
    v = np.sqrt(model.var_v) * rng.standard_normal(u.size)
    e = np.sqrt(model.var_e) * rng.standard_normal(u.size)

    z = linear_outputs(model, u)
    y = model.sensor.eval(z + v, 0) + e

    logger.debug(f"Simulated {u.size} samples with seed {seed}")
    return Dataset.from_arrays(u, np.atleast_1d(y), seed=seed)
