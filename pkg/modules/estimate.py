"""
Derivative-free optimizers and estimator front-ends.

Scalar problems use bounded Brent minimization (golden section with
successive parabolic interpolation); vector problems use Nelder-Mead with the
standard coefficients (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
Noise variances and the sensor are known and never estimated.
"""

import logging
from typing import Any, Callable, Dict, List, Literal, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import minimize, minimize_scalar as scipy_minimize_scalar

from core.exceptions import (
    EvaluationError,
    InvalidArgumentError,
    NonInvertibleError,
    OutOfRangeError,
    WienerLabError,
)
from modules.likelihood import get_cost_function
from modules.quadrature import hermite_rule
from modules.system import WienerModel, regressor
from utils.validation import as_finite_array, validate_same_length

logger = logging.getLogger(__name__)

EstimatorMethod = Literal["exact-ml", "gauss1", "gauss2", "cmp"]

_COST_NAMES: Dict[str, str] = {
    "exact-ml": "exact",
    "gauss1": "gauss1",
    "gauss2": "gauss2",
    "cmp": "cmp",
}

POSITIVE_LOWER_BOUND = 1e-6


class ScalarMinimum(NamedTuple):
    argmin: float
    value: float
    iterations: int
    converged: bool


class SimplexMinimum(NamedTuple):
    argmin: np.ndarray
    value: float
    iterations: int
    converged: bool


class FitOptions(BaseModel):
    """Estimator settings."""

    positive: bool = False
    theta0: Optional[List[float]] = None
    bracket_width: float = Field(default=5.0, gt=0.0)
    refine_width: float = Field(default=1.0, gt=0.0)
    upper: Optional[float] = None
    scalar_tol: float = Field(default=1e-8, gt=0.0)
    simplex_tol: float = Field(default=1e-10, gt=0.0)
    simplex_xtol: float = Field(default=1e-9, gt=0.0)
    simplex_scale: float = Field(default=0.1, gt=0.0)
    max_iter: Optional[int] = Field(default=None, ge=1)
    gh_order: int = Field(default=100, ge=1)


class EstimateResult(BaseModel):
    """Outcome of one fit."""

    theta_hat: List[float]
    cost: float
    initial_cost: float
    method: EstimatorMethod
    iterations: int
    converged: bool
    bracket_or_simplex: Dict[str, Any] = Field(default_factory=dict)


def _checked(f: Callable, module: str = "estimate") -> Callable:
    def wrapped(x):
        value = float(f(x))
        if not np.isfinite(value):
            raise EvaluationError(f"Objective is not finite at {x}", module)
        return value

    return wrapped


def minimize_scalar(
    f: Callable[[float], float], lower: float, upper: float, tol: float = 1e-8
) -> ScalarMinimum:
    """
    Minimize f on [lower, upper] without leaving the bracket.

    Ties with the bracket midpoint are broken toward the midpoint, so a
    constant f returns (lower + upper) / 2.

    Raises:
        InvalidArgumentError: If lower >= upper
        EvaluationError: If f returns a non-finite value
    """
    if not lower < upper:
        raise InvalidArgumentError(f"Bracket must satisfy lower < upper, got [{lower}, {upper}]", "estimate")

    objective = _checked(f)
    result = scipy_minimize_scalar(
        objective, bounds=(lower, upper), method="bounded", options={"xatol": tol, "maxiter": 500}
    )

    argmin, value = float(result.x), float(result.fun)
    midpoint = 0.5 * (lower + upper)
    midpoint_value = objective(midpoint)
    if midpoint_value <= value:
        argmin, value = midpoint, midpoint_value

    iterations = int(getattr(result, "nit", result.nfev))
    logger.debug(f"Scalar search on [{lower}, {upper}] finished after {iterations} iterations")
    return ScalarMinimum(argmin, value, iterations, bool(result.success))


def minimize_simplex(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    scale: float = 0.1,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    xtol: float = 1e-9,
) -> SimplexMinimum:
    """
    Nelder-Mead from the simplex {x0, x0 + scale * e_i}.

    Stops when the spread of simplex costs is below ``tol`` (and the simplex
    diameter below ``xtol``) or after ``max_iter`` iterations.

    Raises:
        EvaluationError: If f returns a non-finite value
    """
    x0 = as_finite_array(x0, "x0", "estimate")
    dimension = x0.size
    max_iter = max_iter or 2000 * dimension

    simplex = np.vstack([x0, x0 + scale * np.eye(dimension)])
    result = minimize(
        _checked(f),
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "fatol": tol,
            "xatol": xtol,
            "maxiter": max_iter,
            "maxfev": 10 * max_iter,
            "adaptive": False,
        },
    )
    return SimplexMinimum(
        np.asarray(result.x, dtype=float), float(result.fun), int(result.nit), bool(result.success)
    )


def _inverse_heuristic(
    model: WienerModel, u: np.ndarray, y: np.ndarray, positive: bool = False
) -> Optional[np.ndarray]:
    """
    Invert the sensor on the outputs and regress on the input (None if not invertible).

    With ``positive`` a scalar model inverts on [POSITIVE_LOWER_BOUND, ...),
    widened upward only, so even sensors invert on their increasing branch.
    """
    sensor = model.sensor
    try:
        if model.nb == 1:
            level = float(np.mean(u))
            if level == 0.0:
                return None
            target = [float(np.mean(y))]
            if positive and level > 0.0:
                bracket = sensor.invertible_bracket(
                    target, (POSITIVE_LOWER_BOUND, POSITIVE_LOWER_BOUND + 2.0), keep_lower=True
                )
            else:
                bracket = sensor.invertible_bracket(target, (-1.0, 1.0))
            return np.array([sensor.inverse(target[0], bracket) / level])

        bracket = sensor.invertible_bracket(y, (-1.0, 1.0))
        x = sensor.inverse_array(y, bracket)
        theta, *_ = np.linalg.lstsq(regressor(u, model.nb), x, rcond=None)
        return theta
    except (NonInvertibleError, OutOfRangeError, InvalidArgumentError):
        return None


def initial_theta(
    model: WienerModel, u: np.ndarray, y: np.ndarray, options: FitOptions
) -> np.ndarray:
    """
    Starting point: user theta0, else the linear-inverse heuristic, else the
    default bracket midpoint (scalar) or a unit impulse response (vector).
    """
    if options.theta0 is not None:
        theta0 = as_finite_array(options.theta0, "theta0", "estimate")
        if theta0.size != model.nb:
            raise InvalidArgumentError(
                f"theta0 has {theta0.size} entries, model has {model.nb}", "estimate"
            )
        return theta0

    guess = _inverse_heuristic(model, u, y, options.positive)
    if guess is not None and (not options.positive or model.nb > 1 or guess[0] > 0.0):
        return guess

    if model.nb == 1:
        if options.positive:
            return np.array([0.5 * (POSITIVE_LOWER_BOUND + options.bracket_width)])
        return np.zeros(1)

    impulse = np.zeros(model.nb)
    impulse[0] = 1.0
    return impulse


def _scalar_bracket(center: float, width: float, options: FitOptions):
    if options.positive:
        lower = max(POSITIVE_LOWER_BOUND, center - width)
        upper = options.upper if options.upper is not None else max(center, 0.0) + width
        return lower, max(upper, lower + width)
    return center - width, center + width


def fit(
    u: Sequence[float],
    y: Sequence[float],
    model_template: WienerModel,
    method: EstimatorMethod,
    options: Optional[FitOptions] = None,
) -> EstimateResult:
    """
    Minimize the selected negative log-likelihood over theta.

    Args:
        u: Input sequence
        y: Output sequence
        model_template: Sensor and noise variances; its theta fixes the dimension
        method: "exact-ml", "gauss1", "gauss2" or "cmp"
        options: Estimator settings

    Returns:
        EstimateResult: converged=False signals optimizer trouble, not an exception

    Raises:
        InvalidArgumentError: For an unknown method or malformed data
    """
    if method not in _COST_NAMES:
        raise InvalidArgumentError(
            f"Unsupported estimator: {method}. Valid options: {list(_COST_NAMES)}", "estimate"
        )

    options = options or FitOptions()
    u = as_finite_array(u, "u", "estimate")
    y = as_finite_array(y, "y", "estimate")
    validate_same_length(u, y, "u and y", "estimate")

    cost = get_cost_function(_COST_NAMES[method])
    rule = hermite_rule(options.gh_order) if method == "exact-ml" else None

    def objective(theta) -> float:
        return cost(model_template.with_theta(np.atleast_1d(theta)), u, y, rule)

    width = options.bracket_width
    if method == "exact-ml" and options.theta0 is None:
        seed = fit(u, y, model_template, "cmp", options)
        start = np.asarray(seed.theta_hat)
        width = options.refine_width
        logger.debug(f"exact-ml seeded by cmp estimate {seed.theta_hat}")
    else:
        start = initial_theta(model_template, u, y, options)

    if model_template.nb == 1:
        lower, upper = _scalar_bracket(float(start[0]), width, options)
        start_point = float(np.clip(start[0], lower, upper))
        initial_cost = objective(start_point)

        found = minimize_scalar(objective, lower, upper, options.scalar_tol)
        theta_hat, value = np.array([found.argmin]), found.value
        if value > initial_cost:
            theta_hat, value = np.array([start_point]), initial_cost

        iterations, converged = found.iterations, found.converged
        diagnostics: Dict[str, Any] = {"bracket": [lower, upper], "start": start_point}
    else:
        initial_cost = objective(start)
        found = minimize_simplex(
            objective,
            start,
            options.simplex_scale,
            options.simplex_tol,
            options.max_iter,
            options.simplex_xtol,
        )
        theta_hat, value = found.argmin, found.value
        if value > initial_cost:
            theta_hat, value = start, initial_cost

        iterations, converged = found.iterations, found.converged
        diagnostics = {"start": start.tolist(), "scale": options.simplex_scale}

    if not converged:
        logger.warning(f"{method} fit did not converge after {iterations} iterations")

    return EstimateResult(
        theta_hat=theta_hat.tolist(),
        cost=value,
        initial_cost=initial_cost,
        method=method,
        iterations=iterations,
        converged=converged,
        bracket_or_simplex=diagnostics,
    )


def safe_fit(
    u: Sequence[float],
    y: Sequence[float],
    model_template: WienerModel,
    method: EstimatorMethod,
    options: Optional[FitOptions] = None,
) -> Optional[EstimateResult]:
    """``fit`` that returns None on library errors, for batch use."""
    try:
        return fit(u, y, model_template, method, options)
    except WienerLabError as exc:
        logger.warning(f"{method} fit failed in {exc.module}: {exc.message}")
        return None
