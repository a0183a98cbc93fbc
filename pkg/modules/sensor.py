"""
Polynomial sensor nonlinearity h(x) = sum_j c_j x^j.

Sensors are immutable pydantic models so they can be read from and written to
model JSON. Evaluation is vectorized and uses numpy's Horner-scheme ``polyval``.
"""

import logging
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from core.exceptions import (
    InvalidArgumentError,
    NonInvertibleError,
    OutOfRangeError,
)

logger = logging.getLogger(__name__)

MAX_DEGREE = 8
MONOTONE_GRID_POINTS = 1024

Bracket = Tuple[float, float]
RealOrArray = Union[float, np.ndarray]


class PolynomialSensor(BaseModel):
    """Static nonlinearity with analytic derivatives and optional inverse."""

    model_config = ConfigDict(frozen=True)

    coefficients: Tuple[float, ...]
    label: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def resolve_kind(cls, data: Any) -> Any:
        """Expand the JSON sugar aliases into plain coefficient lists."""
        if not isinstance(data, dict) or "kind" not in data:
            return data

        data = dict(data)
        kind = data.pop("kind")

        if kind == "poly":
            if "coefficients" not in data:
                raise ValueError("poly sensor requires 'coefficients'")
        elif kind == "linear":
            gain = data.pop("gain", 1.0)
            data.setdefault("coefficients", [0.0, float(gain)])
            data.setdefault("label", "linear")
        elif kind == "quadratic":
            data.setdefault("coefficients", [0.0, 0.0, 0.5])
            data.setdefault("label", "quadratic")
        elif kind == "cubic":
            data.setdefault("coefficients", [0.0, 0.0, 0.0, 1.0 / 3.0])
            data.setdefault("label", "cubic")
        elif kind == "square":
            data.setdefault("coefficients", [0.0, 0.0, 1.0])
            data.setdefault("label", "square")
        else:
            raise ValueError(f"Unsupported sensor kind: {kind}")

        return data

    @field_validator("coefficients")
    @classmethod
    def trim_coefficients(cls, v):
        """Drop trailing zeros so the degree matches the last nonzero coefficient."""
        coefficients = [float(c) for c in v]
        if not coefficients:
            raise ValueError("At least one coefficient is required")
        if not all(np.isfinite(coefficients)):
            raise ValueError("Sensor coefficients must be finite")

        while len(coefficients) > 1 and coefficients[-1] == 0.0:
            coefficients.pop()

        if len(coefficients) - 1 > MAX_DEGREE:
            raise ValueError(
                f"Sensor degree {len(coefficients) - 1} exceeds maximum {MAX_DEGREE}"
            )
        return tuple(coefficients)

    # Named instances

    @classmethod
    def linear(cls, gain: float = 1.0) -> "PolynomialSensor":
        """h(x) = K x."""
        return cls(kind="linear", gain=gain)

    @classmethod
    def quadratic(cls) -> "PolynomialSensor":
        """h(x) = x^2 / 2."""
        return cls(kind="quadratic")

    @classmethod
    def cubic(cls) -> "PolynomialSensor":
        """h(x) = x^3 / 3."""
        return cls(kind="cubic")

    @classmethod
    def square(cls) -> "PolynomialSensor":
        """h(x) = x^2."""
        return cls(kind="square")

    # Evaluation

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @property
    def display_name(self) -> str:
        return self.label or f"poly{list(self.coefficients)}"

    def to_spec(self) -> Dict[str, Any]:
        """JSON sensor spec in the canonical ``poly`` form."""
        spec: Dict[str, Any] = {"kind": "poly", "coefficients": list(self.coefficients)}
        if self.label:
            spec["label"] = self.label
        return spec

    def eval(self, x: RealOrArray, derivative_order: int = 0) -> RealOrArray:
        """
        Evaluate h or one of its first three derivatives.

        Args:
            x: Point or array of points
            derivative_order: 0, 1, 2 or 3

        Returns:
            Value(s) of h^(k)(x), exactly zero beyond the degree

        Raises:
            InvalidArgumentError: If derivative_order is outside 0..3
        """
        if derivative_order not in (0, 1, 2, 3):
            raise InvalidArgumentError(
                f"derivative_order must be in 0..3, got {derivative_order}", "sensor"
            )

        poly = self.polynomial.deriv(derivative_order) if derivative_order else self.polynomial
        values = poly(np.asarray(x, dtype=float))
        if np.ndim(values) == 0:
            return float(values)
        return values

    def derivative(self, order: int = 1) -> "PolynomialSensor":
        """Return h^(order) as a sensor of its own."""
        return PolynomialSensor(coefficients=tuple(self.polynomial.deriv(order).coef))

    # Inversion

    def is_monotone(self, bracket: Bracket) -> bool:
        """
        Test strict monotonicity of h on a closed bracket.

        The sign of h' is sampled on a uniform grid, and every real root of h'
        inside the bracket is checked for a sign change. A derivative that only
        touches zero (e.g. x^3/3 at 0) keeps h strictly monotone.
        """
        lower, upper = _validate_bracket(bracket)
        slope = self.polynomial.deriv(1)

        grid = np.linspace(lower, upper, MONOTONE_GRID_POINTS)
        signs = np.sign(slope(grid))
        nonzero = signs[signs != 0]
        if nonzero.size == 0 or np.any(nonzero != nonzero[0]):
            return False

        if slope.degree() >= 1:
            delta = 1e-7 * max(1.0, upper - lower)
            for root in slope.roots():
                if abs(root.imag) > 1e-9:
                    continue
                r = float(root.real)
                if lower < r < upper:
                    left, right = np.sign(slope(r - delta)), np.sign(slope(r + delta))
                    if left * right < 0:
                        return False

        return True

    def image(self, bracket: Bracket) -> Bracket:
        """Image of a bracket under a monotone sensor, as (low, high)."""
        lower, upper = _validate_bracket(bracket)
        ends = sorted((float(self.polynomial(lower)), float(self.polynomial(upper))))
        return ends[0], ends[1]

    def inverse_array(self, y: np.ndarray, bracket: Bracket) -> np.ndarray:
        """
        Vectorized inverse of h on a bracket where h is strictly monotone.

        Bisection brings every target within rounding distance, then guarded
        Newton steps polish the result.

        Raises:
            NonInvertibleError: If h is not strictly monotone on the bracket
            OutOfRangeError: If a target lies outside the image of the bracket
        """
        lower, upper = _validate_bracket(bracket)
        if not self.is_monotone((lower, upper)):
            raise NonInvertibleError(
                f"Sensor {self.display_name} is not strictly monotone on [{lower}, {upper}]"
            )

        targets = np.atleast_1d(np.asarray(y, dtype=float))
        low_value, high_value = self.image((lower, upper))
        slack = 1e-12 * max(1.0, abs(low_value), abs(high_value))
        outside = (targets < low_value - slack) | (targets > high_value + slack)
        if np.any(outside):
            index = int(np.flatnonzero(outside)[0])
            raise OutOfRangeError(
                f"Value {targets[index]} at index {index} lies outside the image "
                f"[{low_value}, {high_value}] of the bracket"
            )

        poly = self.polynomial
        slope = poly.deriv(1)
        increasing = poly(upper) > poly(lower)

        lo = np.full_like(targets, lower)
        hi = np.full_like(targets, upper)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = (poly(mid) < targets) if increasing else (poly(mid) > targets)
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
                break

        x = 0.5 * (lo + hi)
        for _ in range(4):
            residual = poly(x) - targets
            d = slope(x)
            safe = d != 0.0
            step = np.where(safe, residual / np.where(safe, d, 1.0), 0.0)
            candidate = np.clip(x - step, lower, upper)
            better = np.abs(poly(candidate) - targets) < np.abs(residual)
            x = np.where(better, candidate, x)

        return x

    def inverse(self, y: float, bracket: Bracket) -> float:
        """
        Solve h(x) = y for x in a bracket where h is strictly monotone.

        Raises:
            NonInvertibleError: If h is not strictly monotone on the bracket
            OutOfRangeError: If y lies outside the image of the bracket
        """
        return float(self.inverse_array(np.array([float(y)]), bracket)[0])

    def invertible_bracket(
        self,
        targets: Sequence[float],
        bracket: Bracket,
        max_doublings: int = 40,
        keep_lower: bool = False,
    ) -> Bracket:
        """
        Widen a bracket until its image covers all targets.

        The half-width doubles about the bracket center, or only the upper end
        moves when ``keep_lower`` is set (e.g. a positivity constraint).

        Raises:
            NonInvertibleError: If h is not monotone on the starting bracket or
                stops being monotone while widening
            OutOfRangeError: If the targets stay uncovered after ``max_doublings``
        """
        lower, upper = _validate_bracket(bracket)
        targets = np.asarray(targets, dtype=float)
        wanted = (float(np.min(targets)), float(np.max(targets)))

        center, half = 0.5 * (lower + upper), 0.5 * (upper - lower)
        for _ in range(max_doublings + 1):
            current = (lower, lower + 2.0 * half) if keep_lower else (center - half, center + half)
            if not self.is_monotone(current):
                raise NonInvertibleError(
                    f"Sensor {self.display_name} is not strictly monotone on "
                    f"[{current[0]}, {current[1]}]"
                )
            low_value, high_value = self.image(current)
            if low_value <= wanted[0] and wanted[1] <= high_value:
                return current
            half *= 2.0

        raise OutOfRangeError(
            f"Targets in [{wanted[0]}, {wanted[1]}] not covered by the image of "
            f"sensor {self.display_name} after {max_doublings} bracket doublings"
        )


def _validate_bracket(bracket: Bracket) -> Bracket:
    lower, upper = float(bracket[0]), float(bracket[1])
    if not (np.isfinite(lower) and np.isfinite(upper)) or lower >= upper:
        raise InvalidArgumentError(
            f"Bracket must satisfy lower < upper, got [{lower}, {upper}]", "sensor"
        )
    return lower, upper
