"""
Negative log-likelihood cost functions for stochastic Wiener models.

* ``exact_nll``: marginal likelihood, process noise integrated out with a
  Gauss-Hermite rule centred on each mode of the integrand, summed with
  log-sum-exp.
* ``invertible_nll``: the same density written through h^{-1}, integrating
  over the measurement noise instead.
* Gaussian pseudo-likelihoods over a per-sample mean/variance model:
  first-order (gauss1), second-order (gauss2) and conditional mean
  predictor (cmp).
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import logsumexp

from core.exceptions import (
    EvaluationError,
    InvalidArgumentError,
    LikelihoodOverflowError,
    NonInvertibleError,
    OutOfRangeError,
    SingularLikelihoodError,
)
from modules.moments import get_moment_calculator
from modules.quadrature import QuadratureRule, log_expect_gaussian
from modules.system import WienerModel, linear_outputs, regressor
from utils.validation import as_finite_array, validate_same_length

logger = logging.getLogger(__name__)

# Process-noise half-width of the starting inversion bracket, in standard deviations
INVERSION_BRACKET_SIGMAS = 8.0

# Quadrature entries evaluated per block of samples in the marginal likelihoods
_BLOCK_ENTRIES = 2_000_000

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MeanVarSequence:
    """
    Per-sample Gaussian model y_t ~ Normal(mu_t, C_t).

    Attributes:
        means: mu_t(theta), shape (N,)
        variances: C_t(theta) > 0, shape (N,)
        mean_gradients: d mu_t / d theta, shape (N, m), optional
        variance_gradients: d C_t / d theta, shape (N, m), optional
    """

    means: np.ndarray
    variances: np.ndarray
    mean_gradients: Optional[np.ndarray] = None
    variance_gradients: Optional[np.ndarray] = None

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        validate_same_length(means, variances, "means and variances", "likelihood")

        if not np.all(variances > 0.0):
            index = int(np.flatnonzero(~(variances > 0.0))[0])
            raise InvalidArgumentError(
                f"Variance must be positive, got {variances[index]} at sample {index}",
                "likelihood",
            )

        for name in ("mean_gradients", "variance_gradients"):
            gradients = getattr(self, name)
            if gradients is not None:
                gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
                if gradients.shape[0] != means.shape[0]:
                    raise InvalidArgumentError(f"{name} must have one row per sample", "likelihood")
                object.__setattr__(self, name, gradients)

        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def has_gradients(self) -> bool:
        return self.mean_gradients is not None and self.variance_gradients is not None


def gaussian_nll(seq: MeanVarSequence, y: Sequence[float]) -> float:
    """
    Gaussian cost 1/2 sum_t [(y_t - mu_t)^2 / C_t + log C_t], no additive constants.

    Raises:
        InvalidArgumentError: If lengths differ
    """
    y = as_finite_array(y, "y", "likelihood")
    validate_same_length(y, seq.means, "y and means", "likelihood")

    residuals = y - seq.means
    return float(0.5 * np.sum(residuals**2 / seq.variances + np.log(seq.variances)))


def nll_gradient_assembled(seq: MeanVarSequence, y: Sequence[float]) -> np.ndarray:
    """theta-gradient of ``gaussian_nll`` assembled from the sequence gradients."""
    if not seq.has_gradients:
        raise InvalidArgumentError("Sequence carries no gradients", "likelihood")

    y = as_finite_array(y, "y", "likelihood")
    residuals = y - seq.means
    mean_weight = -residuals / seq.variances
    variance_weight = 0.5 * (1.0 / seq.variances - residuals**2 / seq.variances**2)
    return mean_weight @ seq.mean_gradients + variance_weight @ seq.variance_gradients


# Mean/variance models


class MeanVarModel(ABC):
    """A per-sample Gaussian approximation of the Wiener output distribution."""

    name: str = ""

    @abstractmethod
    def moments(
        self, model: WienerModel, z: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (mu, C, d mu/dz, d C/dz) evaluated at each z."""
        pass

    def is_exact_for(self, model: WienerModel) -> bool:
        """Whether mu and C are the true conditional moments for this sensor."""
        return model.sensor.degree <= 1

    def sequence(
        self, model: WienerModel, theta: Sequence[float], u: Sequence[float]
    ) -> MeanVarSequence:
        """Build the sequence at theta, with gradients by the chain rule through z_t."""
        theta = as_finite_array(theta, "theta", "likelihood")
        phi = regressor(u, theta.size)
        z = phi @ theta

        mean, variance, mean_slope, variance_slope = self.moments(model, z)
        return MeanVarSequence(
            means=mean,
            variances=variance,
            mean_gradients=mean_slope[:, None] * phi,
            variance_gradients=variance_slope[:, None] * phi,
        )


class FirstOrderModel(MeanVarModel):
    """mu = h(z), C = var_e + h'(z)^2 var_v."""

    name = "gauss1"

    def moments(self, model, z):
        h, s = model.sensor, model.var_v
        d1, d2 = h.eval(z, 1), h.eval(z, 2)

        mean = h.eval(z, 0)
        variance = model.var_e + d1**2 * s
        return (
            np.atleast_1d(mean),
            np.atleast_1d(variance),
            np.atleast_1d(d1),
            np.atleast_1d(2.0 * s * d1 * d2),
        )


class SecondOrderModel(MeanVarModel):
    """mu = h + h'' var_v / 2, C = var_e + h'^2 var_v + h''^2 var_v^2 / 2."""

    name = "gauss2"

    def moments(self, model, z):
        h, s = model.sensor, model.var_v
        d0, d1, d2, d3 = (h.eval(z, k) for k in range(4))

        mean = d0 + 0.5 * d2 * s
        variance = model.var_e + d1**2 * s + 0.5 * d2**2 * s**2
        mean_slope = d1 + 0.5 * d3 * s
        variance_slope = 2.0 * s * d1 * d2 + s**2 * d2 * d3
        return (
            np.atleast_1d(mean),
            np.atleast_1d(variance),
            np.atleast_1d(mean_slope),
            np.atleast_1d(variance_slope),
        )

    def is_exact_for(self, model: WienerModel) -> bool:
        return model.sensor.degree <= 2


class ConditionalMeanModel(MeanVarModel):
    """mu = E_v{h(z + v)}, C = Var{h(z + v) + e} in closed form."""

    name = "cmp"

    def moments(self, model, z):
        calculator = get_moment_calculator(model.sensor, model.var_v, model.var_e)
        z = np.asarray(z, dtype=float)
        return (
            np.atleast_1d(calculator.mean(z)),
            np.atleast_1d(calculator.variance(z)),
            np.atleast_1d(calculator.mean_derivative(z)),
            np.atleast_1d(calculator.variance_derivative(z)),
        )

    def is_exact_for(self, model: WienerModel) -> bool:
        return model.sensor.degree <= 2


_MEANVAR_MODELS: Dict[str, MeanVarModel] = {
    "gauss1": FirstOrderModel(),
    "gauss2": SecondOrderModel(),
    "cmp": ConditionalMeanModel(),
}


def get_meanvar_model(kind: str) -> MeanVarModel:
    """
    Get a mean/variance model by name.

    Raises:
        InvalidArgumentError: If the kind is not supported
    """
    if kind not in _MEANVAR_MODELS:
        raise InvalidArgumentError(
            f"Unsupported mean/variance model: {kind}. Valid options: {list(_MEANVAR_MODELS)}",
            "likelihood",
        )
    return _MEANVAR_MODELS[kind]


def list_meanvar_models() -> List[str]:
    """List available mean/variance model names."""
    return list(_MEANVAR_MODELS.keys())


def meanvar_gauss1(model: WienerModel, theta: Sequence[float], u: Sequence[float]) -> MeanVarSequence:
    """First-order Gauss approximation model at theta."""
    return _MEANVAR_MODELS["gauss1"].sequence(model, theta, u)


def meanvar_gauss2(model: WienerModel, theta: Sequence[float], u: Sequence[float]) -> MeanVarSequence:
    """Second-order model with the zero-mean noise contribution h'' var_v / 2."""
    return _MEANVAR_MODELS["gauss2"].sequence(model, theta, u)


def meanvar_cmp(model: WienerModel, theta: Sequence[float], u: Sequence[float]) -> MeanVarSequence:
    """Conditional mean predictor with its prediction error variance."""
    return _MEANVAR_MODELS["cmp"].sequence(model, theta, u)


# Marginal likelihoods

# Relative imaginary part below which a stationary point counts as real
_REAL_ROOT_TOL = 1e-6

# Floor on the proposal curvature, in units of 1 / var_v (width at most 2 sd_v)
_MIN_CURVATURE = 0.25


@dataclass(frozen=True)
class PosteriorModes:
    """
    Laplace proposals at the local maxima in x = z_t + v of the per-sample integrand
    N(x; z_t, var_v) N(y_t; h(x), var_e).

    Attributes:
        centers: Proposal means, shape (N, K)
        variances: Proposal variances, shape (N, K)
        log_heights: Log integrand (without normalizing constants) at each
            center; -inf marks an unused slot
    """

    centers: np.ndarray
    variances: np.ndarray
    log_heights: np.ndarray


def _prepare(model: WienerModel, u: Sequence[float], y: Sequence[float]):
    u = as_finite_array(u, "u", "likelihood")
    y = as_finite_array(y, "y", "likelihood")
    validate_same_length(u, y, "u and y", "likelihood")
    return u, y, linear_outputs(model, u)


def _log_joint(model: WienerModel, x: np.ndarray, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """-(x - z)^2 / (2 var_v) - (y - h(x))^2 / (2 var_e)."""
    residual = y - model.sensor.eval(x, 0)
    return -((x - z) ** 2) / (2.0 * model.var_v) - residual**2 / (2.0 * model.var_e)


def _polynomial_roots(coefficients: np.ndarray) -> np.ndarray:
    """Complex roots of every row of ascending coefficients, via companion matrices."""
    degree = coefficients.shape[1] - 1
    companion = np.zeros((coefficients.shape[0], degree, degree))
    companion[:, np.arange(1, degree), np.arange(degree - 1)] = 1.0
    companion[:, :, -1] = -coefficients[:, :-1] / coefficients[:, -1:]
    return np.linalg.eigvals(companion)


def posterior_modes(model: WienerModel, z: np.ndarray, y: np.ndarray) -> PosteriorModes:
    """
    Locate the maxima of the marginal-likelihood integrand for all samples at once.

    Stationary points solve var_v (y_t - h(x)) h'(x) - var_e (x - z_t) = 0, a
    polynomial of degree 2d - 1 whose leading coefficient does not depend on
    the sample. Real roots with negative curvature are kept, plus the highest
    real root of each sample. Slots are packed so that column count equals the
    largest number of maxima of any sample.

    Args:
        model: Wiener model with var_v > 0 and var_e > 0
        z: Noise-free linear outputs, shape (N,)
        y: Outputs, shape (N,)
    """
    sensor = model.sensor
    slope = sensor.polynomial.deriv(1)
    var_v, var_e = model.var_v, model.var_e

    base = (-var_v * sensor.polynomial * slope - var_e * Polynomial([0.0, 1.0])).trim()
    data_term = (var_v * slope).coef

    coefficients = np.tile(base.coef, (y.size, 1))
    coefficients[:, :data_term.size] += y[:, None] * data_term
    coefficients[:, 0] += var_e * z
    roots = _polynomial_roots(coefficients)

    centers = roots.real
    z_col, y_col = z[:, None], y[:, None]
    heights = _log_joint(model, centers, z_col, y_col)
    curvature = 1.0 / var_v + (
        sensor.eval(centers, 1) ** 2 - sensor.eval(centers, 2) * (y_col - sensor.eval(centers, 0))
    ) / var_e

    real = np.abs(roots.imag) <= _REAL_ROOT_TOL * np.maximum(1.0, np.abs(centers))
    keep = real & (curvature > 0.0)
    ranked = np.where(real.any(axis=1, keepdims=True), np.where(real, heights, -np.inf), heights)
    keep[np.arange(y.size), np.argmax(ranked, axis=1)] = True

    order = np.argsort(~keep, axis=1, kind="stable")
    width = int(keep.sum(axis=1).max())

    def packed(values: np.ndarray) -> np.ndarray:
        return np.take_along_axis(values, order, axis=1)[:, :width]

    keep = packed(keep)
    curvature = np.maximum(packed(curvature), _MIN_CURVATURE / var_v)
    return PosteriorModes(
        centers=packed(centers),
        variances=1.0 / curvature,
        log_heights=np.where(keep, packed(heights), -np.inf),
    )


LogIntegrand = Callable[[np.ndarray, slice], np.ndarray]


def _log_marginal(modes: PosteriorModes, rule: QuadratureRule, log_integrand: LogIntegrand) -> np.ndarray:
    """
    log of the integral over x of exp(log_integrand(x, rows)), per sample.

    With Laplace components a_k N_k(x) and their sum R(x), the integral is
    sum_k a_k E_{N_k}{ f(x) / R(x) }, each expectation a Gauss-Hermite rule
    centred and scaled on its own mode. The split is an identity for any set of
    components; the components only decide how well the rule resolves f.
    """
    n_samples, count = modes.centers.shape
    log_density = np.empty(n_samples)

    block = max(1, _BLOCK_ENTRIES // (rule.order * count * count))
    for start in range(0, n_samples, block):
        rows = slice(start, min(start + block, n_samples))
        centers = modes.centers[rows]
        variances = modes.variances[rows]
        heights = modes.log_heights[rows]
        log_masses = heights + 0.5 * (LOG_2PI + np.log(variances))

        def log_mixture(x: np.ndarray) -> np.ndarray:
            offsets = x[..., None] - centers[:, None, :]
            return logsumexp(heights[:, None, :] - offsets**2 / (2.0 * variances[:, None, :]), axis=-1)

        terms = np.empty((rows.stop - rows.start, count))
        for k in range(count):
            def log_f(x: np.ndarray, k: int = k) -> np.ndarray:
                return log_integrand(x, rows) + log_masses[:, k:k + 1] - log_mixture(x)

            terms[:, k] = log_expect_gaussian(log_f, centers[:, k], variances[:, k], rule)

        log_density[rows] = logsumexp(terms, axis=1)

    return log_density


def exact_nll(
    model: WienerModel, u: Sequence[float], y: Sequence[float], rule: QuadratureRule
) -> float:
    """
    Exact negative log-likelihood with the process noise marginalized.

    -sum_t log E_v{ N(y_t; h(z_t + v), var_e) }. Each expectation is a
    log-sum-exp Gauss-Hermite sum centred and scaled on the modes of the
    integrand in v, so sharply peaked samples converge as fast as flat ones.
    A zero var_v reduces to the Gaussian density of y_t around h(z_t).

    Raises:
        SingularLikelihoodError: If var_e is zero
        LikelihoodOverflowError: If a sample's density is not representable
    """
    if model.var_e <= 0.0:
        raise SingularLikelihoodError(
            "Measurement noise variance is zero; the output has no density"
        )

    u, y, z = _prepare(model, u, y)
    log_norm_e = -0.5 * (LOG_2PI + np.log(model.var_e))

    if model.var_v == 0.0:
        log_density = log_norm_e - (y - model.sensor.eval(z, 0)) ** 2 / (2.0 * model.var_e)
    else:
        log_norm = log_norm_e - 0.5 * (LOG_2PI + np.log(model.var_v))

        def log_integrand(x: np.ndarray, rows: slice) -> np.ndarray:
            return log_norm + _log_joint(model, x, z[rows, None], y[rows, None])

        log_density = _log_marginal(posterior_modes(model, z, y), rule, log_integrand)

    if not np.all(np.isfinite(log_density)):
        index = int(np.flatnonzero(~np.isfinite(log_density))[0])
        raise LikelihoodOverflowError(
            f"Marginal density of sample {index} is not representable after stabilization"
        )

    return float(-np.sum(log_density))


def _node_extent(modes: PosteriorModes, rule: QuadratureRule, rows: slice = slice(None)) -> np.ndarray:
    """Smallest and largest quadrature node over the given samples."""
    reach = np.sqrt(2.0 * modes.variances[rows]) * float(np.max(np.abs(rule.nodes)))
    centers = modes.centers[rows]
    return np.array([np.min(centers - reach), np.max(centers + reach)])


def _inversion_bracket(
    sensor, targets: np.ndarray, start_bracket, sample_targets: Callable[[int], np.ndarray], n_samples: int
):
    """Widen the start bracket over all targets; name the first sample that cannot be covered."""
    try:
        return sensor.invertible_bracket(targets, start_bracket)
    except OutOfRangeError:
        for index in range(n_samples):
            try:
                sensor.invertible_bracket(sample_targets(index), start_bracket)
            except OutOfRangeError as exc:
                raise EvaluationError(
                    f"Sample {index} cannot be inverted: {exc.message}",
                    "likelihood",
                    sample_index=index,
                )
        raise


def invertible_nll(
    model: WienerModel, u: Sequence[float], y: Sequence[float], rule: QuadratureRule
) -> float:
    """
    Negative log-likelihood through the sensor inverse.

    p(y_t) = E_e{ p_v(h^{-1}(y_t - e) - z_t) / |h'(h^{-1}(y_t - e))| }. The
    e-integral is taken after the substitution e = y_t - h(x), de = h'(x) dx,
    which removes the integrable singularity where h' vanishes (x^3/3 at 0);
    the density itself is still evaluated through h^{-1}. A zero var_e leaves
    the density at e = 0. The inversion bracket starts at
    [min z - 8 sd_v, max z + 8 sd_v] and is widened until its image covers
    every node.

    Raises:
        InvalidArgumentError: If var_v is zero
        NonInvertibleError: If the sensor is not strictly monotone
        EvaluationError: If some sample cannot be inverted, naming its index
    """
    if model.var_v <= 0.0:
        raise InvalidArgumentError(
            "The invertible likelihood needs a positive process noise variance", "likelihood"
        )

    u, y, z = _prepare(model, u, y)
    sensor = model.sensor

    sd_v = np.sqrt(model.var_v)
    start_bracket = (
        float(z.min() - INVERSION_BRACKET_SIGMAS * sd_v),
        float(z.max() + INVERSION_BRACKET_SIGMAS * sd_v),
    )
    if not sensor.is_monotone(start_bracket):
        raise NonInvertibleError(
            f"Sensor {sensor.display_name} is not strictly monotone on "
            f"[{start_bracket[0]}, {start_bracket[1]}]"
        )

    log_norm_v = -0.5 * (LOG_2PI + np.log(model.var_v))

    if model.var_e == 0.0:
        bracket = _inversion_bracket(sensor, y, start_bracket, lambda i: y[i:i + 1], y.size)
        x = sensor.inverse_array(y, bracket)
        slope = np.abs(sensor.eval(x, 1))
        if np.any(slope == 0.0):
            index = int(np.flatnonzero(slope == 0.0)[0])
            raise EvaluationError(
                f"Sensor derivative vanishes at the inverse of sample {index}",
                "likelihood",
                sample_index=index,
            )
        log_density = log_norm_v - (x - z) ** 2 / (2.0 * model.var_v) - np.log(slope)
        return float(-np.sum(log_density))

    modes = posterior_modes(model, z, y)
    bracket = _inversion_bracket(
        sensor,
        sensor.eval(_node_extent(modes, rule), 0),
        start_bracket,
        lambda i: sensor.eval(_node_extent(modes, rule, slice(i, i + 1)), 0),
        y.size,
    )
    log_norm_e = -0.5 * (LOG_2PI + np.log(model.var_e))

    def log_integrand(x: np.ndarray, rows: slice) -> np.ndarray:
        targets = sensor.eval(x, 0)
        e = y[rows, None] - targets
        x_inv = sensor.inverse_array(targets.ravel(), bracket).reshape(x.shape)

        # |h'(x)| from de = h'(x) dx over |h'| of the density's inverse
        node_slope = np.abs(sensor.eval(x, 1))
        inverse_slope = np.abs(sensor.eval(x_inv, 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_jacobian = np.where(
                node_slope == inverse_slope, 0.0, np.log(node_slope) - np.log(inverse_slope)
            )

        singular = np.isposinf(log_jacobian)
        if np.any(singular):
            index = rows.start + int(np.flatnonzero(np.any(singular, axis=1))[0])
            raise EvaluationError(
                f"Sensor derivative vanishes at an inverse node of sample {index}",
                "likelihood",
                sample_index=index,
            )

        log_pv = log_norm_v - (x_inv - z[rows, None]) ** 2 / (2.0 * model.var_v)
        log_pe = log_norm_e - e**2 / (2.0 * model.var_e)
        return log_pv + log_pe + log_jacobian

    log_density = _log_marginal(modes, rule, log_integrand)

    if not np.all(np.isfinite(log_density)):
        index = int(np.flatnonzero(~np.isfinite(log_density))[0])
        raise EvaluationError(
            f"Density of sample {index} is not representable", "likelihood", sample_index=index
        )

    return float(-np.sum(log_density))


CostFunction = Callable[[WienerModel, Sequence[float], Sequence[float], QuadratureRule], float]


def _gaussian_cost(kind: str) -> CostFunction:
    def cost(model, u, y, rule=None):
        seq = get_meanvar_model(kind).sequence(model, model.theta, u)
        return gaussian_nll(seq, y)

    cost.__name__ = f"{kind}_nll"
    return cost


_COST_FUNCTIONS: Dict[str, CostFunction] = {
    "exact": exact_nll,
    "invertible": invertible_nll,
    "gauss1": _gaussian_cost("gauss1"),
    "gauss2": _gaussian_cost("gauss2"),
    "cmp": _gaussian_cost("cmp"),
}


def get_cost_function(method: str) -> CostFunction:
    """
    Get a cost function cost(model, u, y, rule) by method name.

    Raises:
        InvalidArgumentError: If the method is not supported
    """
    if method not in _COST_FUNCTIONS:
        raise InvalidArgumentError(
            f"Unsupported likelihood method: {method}. Valid options: {list(_COST_FUNCTIONS)}",
            "likelihood",
        )
    return _COST_FUNCTIONS[method]


def list_cost_functions() -> List[str]:
    """List available likelihood method names."""
    return list(_COST_FUNCTIONS.keys())
