"""
Validation utilities shared by the numerical modules.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np

from core.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]


def as_finite_array(
    values: ArrayLike, name: str, module: Optional[str] = None
) -> np.ndarray:
    """
    Convert a sequence to a one-dimensional float array and check it is finite.

    Args:
        values: Input sequence
        name: Argument name used in the error message
        module: Module reported in the error

    Returns:
        np.ndarray: Float64 copy of the input

    Raises:
        InvalidArgumentError: If the input is not 1-D, empty, or contains NaN/inf
    """
    array = np.asarray(values, dtype=float)

    if array.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional", module)

    if array.size == 0:
        raise InvalidArgumentError(f"{name} must not be empty", module)

    if not np.all(np.isfinite(array)):
        bad = int(np.flatnonzero(~np.isfinite(array))[0])
        raise InvalidArgumentError(f"{name} contains a non-finite value at index {bad}", module)

    return array


def validate_same_length(
    first: np.ndarray, second: np.ndarray, names: str, module: Optional[str] = None
) -> None:
    """
    Validate that two series have the same number of samples.

    Raises:
        InvalidArgumentError: If the lengths differ
    """
    if len(first) != len(second):
        raise InvalidArgumentError(
            f"Length mismatch between {names}: {len(first)} != {len(second)}", module
        )


def validate_variance(value: float, name: str, module: Optional[str] = None) -> float:
    """
    Validate that a variance is a finite nonnegative real.

    Returns:
        float: The variance as a float

    Raises:
        InvalidArgumentError: If the variance is negative or not finite
    """
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise InvalidArgumentError(f"{name} must be a nonnegative real, got {value}", module)
    return value
