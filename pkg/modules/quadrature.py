"""
Gauss-Hermite quadrature rules and Gaussian expectation operators.

Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
Hermite polynomials (Golub-Welsch). Weights come from the orthonormal
three-term recurrence evaluated at the nodes, with running rescaling so that
their logarithms stay finite at any supported order.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import logsumexp

from core.exceptions import InvalidArgumentError
from utils.validation import validate_variance

logger = logging.getLogger(__name__)

MAX_ORDER = 10000
SQRT_PI = float(np.sqrt(np.pi))
LOG_SQRT_PI = float(0.5 * np.log(np.pi))

_RESCALE_THRESHOLD = 1e150


@dataclass(frozen=True)
class QuadratureRule:
    """
    An n-point Gauss-Hermite rule for the weight exp(-x^2).

    Attributes:
        order: Number of nodes n
        nodes: Ascending roots of H_n, symmetric about zero
        weights: Positive weights summing to sqrt(pi); entries below the smallest
            double flush to zero at high order
        log_weights: Natural logarithm of the weights, always finite
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray

    def probabilities(self) -> np.ndarray:
        """Weights normalized to a probability vector (divide by sqrt(pi))."""
        return self.weights / SQRT_PI


def _hermite_tail(x: np.ndarray, order: int):
    """
    Run the orthonormal Hermite recurrence up to degree ``order``.

    Returns:
        Tuple (p_n, p_{n-1}, log_scale) where the true values are the returned
        ones multiplied by exp(log_scale).
    """
    p_prev = np.zeros_like(x)
    p = np.full_like(x, np.pi ** -0.25)
    log_scale = np.zeros_like(x)

    for j in range(order):
        p_next = x * np.sqrt(2.0 / (j + 1)) * p - np.sqrt(j / (j + 1.0)) * p_prev
        p_prev, p = p, p_next

        magnitude = np.maximum(np.abs(p), np.abs(p_prev))
        large = magnitude > _RESCALE_THRESHOLD
        if np.any(large):
            scale = np.where(large, magnitude, 1.0)
            p = p / scale
            p_prev = p_prev / scale
            log_scale = log_scale + np.log(scale)

    return p, p_prev, log_scale


@lru_cache(maxsize=32)
def hermite_rule(order: int) -> QuadratureRule:
    """
    Build the Gauss-Hermite rule of the given order.

    Args:
        order: Number of nodes, 1 <= order <= MAX_ORDER

    Returns:
        QuadratureRule: Deterministic rule for this order (cached)

    Raises:
        InvalidArgumentError: If the order is outside [1, MAX_ORDER]
    """
    if isinstance(order, bool) or int(order) != order:
        raise InvalidArgumentError(f"Quadrature order must be an integer, got {order}", "quadrature")
    order = int(order)
    if order < 1 or order > MAX_ORDER:
        raise InvalidArgumentError(
            f"Quadrature order must lie in [1, {MAX_ORDER}], got {order}", "quadrature"
        )

    if order == 1:
        nodes = np.zeros(1)
    else:
        off_diagonal = np.sqrt(np.arange(1, order) / 2.0)
        nodes = eigvalsh_tridiagonal(np.zeros(order), off_diagonal)

        # Newton polish on the orthonormal recurrence; the ratio is scale free
        for _ in range(2):
            p_n, p_n1, _ = _hermite_tail(nodes, order)
            nodes = nodes - p_n / (np.sqrt(2.0 * order) * p_n1)

        nodes = np.sort(nodes)
        nodes = 0.5 * (nodes - nodes[::-1])

    _, p_n1, log_scale = _hermite_tail(nodes, order)
    log_weights = -np.log(order) - 2.0 * (np.log(np.abs(p_n1)) + log_scale)
    log_weights = 0.5 * (log_weights + log_weights[::-1])
    weights = np.exp(log_weights)

    for array in (nodes, weights, log_weights):
        array.setflags(write=False)

    if order >= 1000:
        logger.info(f"Built Gauss-Hermite rule of order {order}")

    return QuadratureRule(order=order, nodes=nodes, weights=weights, log_weights=log_weights)


def gaussian_points(mean: float, variance: float, rule: QuadratureRule):
    """
    Map a rule onto Normal(mean, variance).

    Returns:
        Tuple (points, probabilities, log_probabilities). A zero variance
        collapses the rule to the single point ``mean`` with probability one.
    """
    if variance == 0.0:
        return np.array([float(mean)]), np.ones(1), np.zeros(1)

    points = mean + np.sqrt(2.0 * variance) * rule.nodes
    return points, rule.probabilities(), rule.log_weights - LOG_SQRT_PI


def _evaluate(f: Callable, points: np.ndarray) -> np.ndarray:
    values = np.asarray(f(points), dtype=float)
    return np.broadcast_to(values, points.shape)


def expect_gaussian(
    f: Callable[[np.ndarray], np.ndarray],
    mean: float,
    variance: float,
    rule: QuadratureRule,
) -> float:
    """
    Approximate E{f(X)} for X ~ Normal(mean, variance).

    ``f`` is called once with the array of quadrature points and must act
    elementwise. The result is exact for polynomials of degree <= 2n-1, and
    equals f(mean) exactly when the variance is zero.

    Raises:
        InvalidArgumentError: If the variance is negative
    """
    variance = validate_variance(variance, "variance", "quadrature")
    if variance == 0.0:
        return float(np.asarray(f(np.array([float(mean)])), dtype=float).reshape(-1)[0])

    points, probabilities, _ = gaussian_points(mean, variance, rule)
    return float(np.dot(probabilities, _evaluate(f, points)))


def expect_gaussian2(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    mean1: float,
    var1: float,
    mean2: float,
    var2: float,
    rule: QuadratureRule,
) -> float:
    """
    Approximate E{f(V, E)} for independent V ~ Normal(mean1, var1), E ~ Normal(mean2, var2).

    Uses the tensor product of ``rule`` with itself; ``f`` receives broadcastable
    arrays of shape (n, 1) and (1, n).

    Raises:
        InvalidArgumentError: If either variance is negative
    """
    var1 = validate_variance(var1, "var1", "quadrature")
    var2 = validate_variance(var2, "var2", "quadrature")

    points1, prob1, _ = gaussian_points(mean1, var1, rule)
    points2, prob2, _ = gaussian_points(mean2, var2, rule)

    grid1 = points1[:, None]
    grid2 = points2[None, :]
    values = np.broadcast_to(
        np.asarray(f(grid1, grid2), dtype=float), (points1.size, points2.size)
    )
    return float(prob1 @ values @ prob2)


def log_expect_gaussian(
    log_f: Callable[[np.ndarray], np.ndarray],
    mean: Union[float, np.ndarray],
    variance: Union[float, np.ndarray],
    rule: QuadratureRule,
) -> Union[float, np.ndarray]:
    """
    Compute log E{exp(log_f(X))} for X ~ Normal(mean, variance) with log-sum-exp.

    ``mean`` and ``variance`` may be arrays of a common shape, one Gaussian per
    entry. ``log_f`` then receives the points with shape ``mean.shape + (n,)``
    and the result has the shape of ``mean``. Entries of log_f may be -inf.

    Raises:
        InvalidArgumentError: If a variance is negative or not finite
    """
    if np.ndim(mean) == 0 and np.ndim(variance) == 0:
        variance = validate_variance(variance, "variance", "quadrature")
        points, _, log_probabilities = gaussian_points(float(mean), variance, rule)
        return float(logsumexp(_evaluate(log_f, points) + log_probabilities))

    mean, variance = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(variance, dtype=float)
    )
    if not np.all(np.isfinite(variance)) or np.any(variance < 0.0):
        raise InvalidArgumentError("variance must be a nonnegative real", "quadrature")

    points = mean[..., None] + np.sqrt(2.0 * variance)[..., None] * rule.nodes
    log_probabilities = rule.log_weights - LOG_SQRT_PI
    with np.errstate(divide="ignore"):
        return logsumexp(_evaluate(log_f, points) + log_probabilities, axis=-1)
