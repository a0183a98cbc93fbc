"""
Fisher information, score covariance and sandwich asymptotic covariance.

All matrices are per-sample averages (asymptotic, normalized by 1/N). The
closed-form scalar results evaluate the constant-input model z_t = m, for which
the derivatives of h at m_o are all that is needed.
"""

import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from core.exceptions import InvalidArgumentError, SingularInformationError
from modules.likelihood import MeanVarSequence, get_meanvar_model
from modules.moments import KappaSource, get_moment_calculator, residual_kappa
from modules.sensor import PolynomialSensor
from modules.system import WienerModel, regressor
from utils.validation import as_finite_array

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
BOUND_LABEL = "Cramer-Rao bound"
APPROXIMATION_LABEL = "approximation-model information"

MeanVarKind = Literal["gauss1", "gauss2", "cmp"]


class FisherReport(BaseModel):
    """Information, score covariance and asymptotic covariance of one estimator."""

    fim: List[List[float]]
    score_cov: List[List[float]]
    crlb: List[List[float]]
    ascov: List[List[float]]
    gamma: Optional[float] = None
    kappa_range: Tuple[float, float]
    meanvar_kind: str
    kappa_source: str
    is_bound: bool
    information_label: str

    def matrix(self, name: str) -> np.ndarray:
        """One of the matrix fields as a numpy array."""
        return np.asarray(getattr(self, name), dtype=float)

    def normalized_std(self, n_samples: int) -> List[float]:
        """sqrt(diag(AsCov) / N): the predicted standard deviation of each estimate."""
        if n_samples < 1:
            raise InvalidArgumentError("Number of samples must be >= 1", "fisher")
        return np.sqrt(np.diag(self.matrix("ascov")) / n_samples).tolist()


def _outer_average(gradients: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.einsum("t,ti,tj->ij", weights, gradients, gradients) / gradients.shape[0]


def fim_gaussian(seq: MeanVarSequence) -> np.ndarray:
    """
    Asymptotic Fisher information of the Gaussian model Normal(mu_t, C_t).

    (1/N) sum_t [ grad mu grad mu^T / C_t + grad C grad C^T / (2 C_t^2) ]

    Raises:
        InvalidArgumentError: If the sequence has no gradients
    """
    return score_cov(seq, np.ones(len(seq)))


def score_cov(seq: MeanVarSequence, kappas: Sequence[float]) -> np.ndarray:
    """
    Covariance of the Gaussian score under residuals with kurtosis factors kappa_t.

    (1/N) sum_t [ grad mu grad mu^T / C_t + kappa_t grad C grad C^T / (2 C_t^2) ]

    Raises:
        InvalidArgumentError: If gradients are missing, lengths differ or a kappa is negative
    """
    if not seq.has_gradients:
        raise InvalidArgumentError("Fisher information needs mean and variance gradients", "fisher")

    kappas = np.asarray(kappas, dtype=float)
    if kappas.shape != (len(seq),):
        raise InvalidArgumentError(
            f"Expected {len(seq)} kappa values, got {kappas.size}", "fisher"
        )
    if np.any(kappas < 0.0):
        raise InvalidArgumentError("Kurtosis factors must be nonnegative", "fisher")

    c = seq.variances
    matrix = _outer_average(seq.mean_gradients, 1.0 / c) + _outer_average(
        seq.variance_gradients, kappas / (2.0 * c**2)
    )
    return 0.5 * (matrix + matrix.T)


def _factor(fim: np.ndarray):
    fim = np.atleast_2d(np.asarray(fim, dtype=float))
    if fim.shape[0] != fim.shape[1]:
        raise InvalidArgumentError("Information matrix must be square", "fisher")
    if not np.all(np.isfinite(fim)):
        raise SingularInformationError("Information matrix contains non-finite entries")

    condition = np.linalg.cond(fim)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularInformationError(
            f"Information matrix is singular or ill-conditioned (condition {condition:.3g})"
        )
    try:
        return fim, cho_factor(fim, lower=True)
    except LinAlgError:
        raise SingularInformationError("Information matrix is not positive definite")


def information_inverse(fim: np.ndarray) -> np.ndarray:
    """Inverse of a positive-definite information matrix via Cholesky."""
    fim, factor = _factor(fim)
    inverse = cho_solve(factor, np.eye(fim.shape[0]))
    return 0.5 * (inverse + inverse.T)


def sandwich(fim: np.ndarray, score_cov: np.ndarray) -> np.ndarray:
    """
    Asymptotic normalized covariance I^{-1} J I^{-1}.

    Returns I^{-1} itself when J equals I.

    Raises:
        SingularInformationError: If I is singular or its condition number exceeds 1e12
    """
    fim, factor = _factor(fim)
    score = np.atleast_2d(np.asarray(score_cov, dtype=float))
    if score.shape != fim.shape:
        raise InvalidArgumentError("Information and score covariance shapes differ", "fisher")

    inverse = cho_solve(factor, np.eye(fim.shape[0]))
    inverse = 0.5 * (inverse + inverse.T)
    if np.array_equal(score, fim):
        return inverse

    ascov = inverse @ score @ inverse
    return 0.5 * (ascov + ascov.T)


# Closed-form scalar results for z_t = m


def _sensor_derivatives(sensor: PolynomialSensor, m0: float):
    return tuple(float(sensor.eval(m0, k)) for k in (1, 2, 3))


def fim_result1(sensor: PolynomialSensor, m0: float, var_v: float, var_e: float) -> float:
    """
    Information of the first-order Gauss approximation model.

    h'^2 / (var_e + h'^2 var_v) + 2 [var_v h' h'' / (var_e + h'^2 var_v)]^2
    """
    d1, d2, _ = _sensor_derivatives(sensor, m0)
    c = var_e + d1**2 * var_v
    if c <= 0.0:
        raise InvalidArgumentError("Degenerate variance var_e + h'^2 var_v = 0", "fisher")
    return d1**2 / c + 2.0 * (var_v * d1 * d2 / c) ** 2


def fim_result2(sensor: PolynomialSensor, m0: float, var_v: float, var_e: float) -> float:
    """
    Information of the Gauss approximation of the invertible-sensor form.

    1 / (var_v + var_e / h'^2) + 2 [var_e h'' / (h' (var_e + h'^2 var_v))]^2
    """
    d1, d2, _ = _sensor_derivatives(sensor, m0)
    if d1 == 0.0:
        raise InvalidArgumentError(f"h'({m0}) = 0; the invertible form is undefined", "fisher")
    c = var_e + d1**2 * var_v
    if c <= 0.0:
        raise InvalidArgumentError("Degenerate variance var_e + h'^2 var_v = 0", "fisher")
    return 1.0 / (var_v + var_e / d1**2) + 2.0 * (var_e * d2 / (d1 * c)) ** 2


def _result3_terms(
    sensor: PolynomialSensor, m0: float, var_v: float, var_e: float
) -> Tuple[float, float]:
    d1, d2, d3 = _sensor_derivatives(sensor, m0)
    c = var_e + d1**2 * var_v + 0.5 * d2**2 * var_v**2
    if c <= 0.0:
        raise InvalidArgumentError("Degenerate second-order variance C = 0", "fisher")

    slope = d1 + 0.5 * d3 * var_v
    return slope**2 / c, 2.0 * (d2 * var_v * slope / c) ** 2


def _cmp_terms(
    sensor: PolynomialSensor, m0: float, var_v: float, var_e: float
) -> Tuple[float, float]:
    """Mean and variance terms of the information for the exact conditional moments."""
    calculator = get_moment_calculator(sensor, float(var_v), float(var_e))
    c = float(calculator.variance(m0))
    if c <= 0.0:
        raise InvalidArgumentError("Degenerate predictor variance C = 0", "fisher")

    mean_slope = float(calculator.mean_derivative(m0))
    variance_slope = float(calculator.variance_derivative(m0))
    return mean_slope**2 / c, variance_slope**2 / (2.0 * c**2)


def fim_result3(sensor: PolynomialSensor, m0: float, var_v: float, var_e: float) -> float:
    """
    Information of the second-order Gaussian model.

    [h' + h''' var_v/2]^2 / C + 2 [h'' var_v (h' + h''' var_v/2) / C]^2,
    C = var_e + h'^2 var_v + h''^2 var_v^2 / 2.
    """
    mean_term, variance_term = _result3_terms(sensor, m0, var_v, var_e)
    return mean_term + variance_term


def fim_result4(
    sensor: PolynomialSensor,
    m0: float,
    var_v: float,
    var_e: float,
    kappa_source: KappaSource = "true",
    eq45_variant: bool = False,
    meanvar_kind: Literal["gauss2", "cmp"] = "cmp",
) -> FisherReport:
    """
    Asymptotic covariance of the Gaussian criterion minimizer for z_t = m.

    J = mean term + kappa * variance term, AsCov = J / FIM^2, gamma = J / FIM.
    The default "cmp" terms use the exact conditional mean and variance; for
    sensors of degree <= 2 they coincide with the second-order expressions.

    Args:
        sensor: Polynomial sensor
        m0: True mean m_o
        var_v: Process noise variance
        var_e: Measurement noise variance
        kappa_source: "true" (exact residual) or "model" (second-order residual)
        eq45_variant: Use the quadratic-sensor worked expression (variance
            term divided by var_v)
        meanvar_kind: "cmp" (conditional mean predictor) or "gauss2"
            (second-order variance h'^2 var_v + h''^2 var_v^2 / 2 + var_e)

    Raises:
        InvalidArgumentError: For a degenerate variance, or var_v = 0 with eq45_variant
        SingularInformationError: If the information is zero
    """
    if meanvar_kind == "cmp":
        mean_term, variance_term = _cmp_terms(sensor, m0, var_v, var_e)
    elif meanvar_kind == "gauss2":
        mean_term, variance_term = _result3_terms(sensor, m0, var_v, var_e)
    else:
        raise InvalidArgumentError(f"Unsupported mean/variance model: {meanvar_kind}", "fisher")

    if eq45_variant:
        if var_v <= 0.0:
            raise InvalidArgumentError("The worked-expression variant needs var_v > 0", "fisher")
        # var_v in place of var_v^2 in the variance-term numerator
        variance_term /= var_v

    information = mean_term + variance_term
    if information <= 0.0:
        raise SingularInformationError("Scalar information is zero")

    model = WienerModel(theta=(m0,), sensor=sensor, var_v=var_v, var_e=var_e)
    kappa = residual_kappa(model, m0, kappa_source)
    score = mean_term + kappa * variance_term

    is_bound = sensor.degree <= 2
    return FisherReport(
        fim=[[information]],
        score_cov=[[score]],
        crlb=[[1.0 / information]],
        ascov=[[score / information**2]],
        gamma=score / information,
        kappa_range=(kappa, kappa),
        meanvar_kind=meanvar_kind,
        kappa_source=kappa_source,
        is_bound=is_bound,
        information_label=BOUND_LABEL if is_bound else APPROXIMATION_LABEL,
    )


# Assembly for FIR models


def per_sample_kappas(
    model: WienerModel, z: np.ndarray, source: KappaSource = "true"
) -> np.ndarray:
    """Kurtosis factor at each z_t, computed once per distinct value."""
    values, inverse = np.unique(np.asarray(z, dtype=float), return_inverse=True)
    kappas = np.array([residual_kappa(model, float(value), source) for value in values])
    return kappas[inverse.reshape(-1)]


def numeric_gradients(
    model: WienerModel,
    theta: Sequence[float],
    u: Sequence[float],
    kind: MeanVarKind,
    step: float = 1e-6,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Central-difference gradients of mu_t and C_t with respect to theta.

    Returns:
        Tuple (d mu / d theta, d C / d theta), each of shape (N, m)
    """
    theta = as_finite_array(theta, "theta", "fisher")
    meanvar = get_meanvar_model(kind)

    mean_columns, variance_columns = [], []
    for k in range(theta.size):
        h = step * max(1.0, abs(theta[k]))
        forward, backward = theta.copy(), theta.copy()
        forward[k] += h
        backward[k] -= h

        plus = meanvar.sequence(model, forward, u)
        minus = meanvar.sequence(model, backward, u)
        mean_columns.append((plus.means - minus.means) / (2.0 * h))
        variance_columns.append((plus.variances - minus.variances) / (2.0 * h))

    return np.column_stack(mean_columns), np.column_stack(variance_columns)


def gradients_agree(
    analytic: np.ndarray, numeric: np.ndarray, rtol: float = 1e-5, atol: float = 1e-8
) -> bool:
    """Elementwise relative agreement with an absolute floor for vanishing entries."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all(np.abs(analytic - numeric) <= rtol * scale + atol))


def fisher_report(
    model: WienerModel,
    theta0: Sequence[float],
    u: Sequence[float],
    meanvar_kind: MeanVarKind = "cmp",
    kappa_source: KappaSource = "true",
    unit_kappa: bool = False,
    check_gradients: bool = False,
) -> FisherReport:
    """
    Asymptotic information, score covariance and sandwich covariance at theta0.

    Args:
        model: Sensor and noise variances (its theta is replaced by theta0)
        theta0: True FIR coefficients
        u: Input sequence, N >= 1
        meanvar_kind: "gauss1", "gauss2" or "cmp"
        kappa_source: "true" or "model" residual for the kurtosis factors
        unit_kappa: Force kappa_t = 1 (Gaussian residual assumption)
        check_gradients: Cross-check analytic gradients with central differences

    Raises:
        SingularInformationError: If the information matrix cannot be inverted
    """
    theta0 = as_finite_array(theta0, "theta0", "fisher")
    model = model.with_theta(theta0)
    meanvar = get_meanvar_model(meanvar_kind)
    seq = meanvar.sequence(model, theta0, u)

    if check_gradients:
        numeric_mean, numeric_variance = numeric_gradients(model, theta0, u, meanvar_kind)
        if not (
            gradients_agree(seq.mean_gradients, numeric_mean)
            and gradients_agree(seq.variance_gradients, numeric_variance)
        ):
            logger.warning(f"Analytic {meanvar_kind} gradients disagree with central differences")

    z = regressor(u, theta0.size) @ theta0
    if unit_kappa:
        kappas = np.ones(len(seq))
    else:
        kappas = per_sample_kappas(model, z, kappa_source)

    information = fim_gaussian(seq)
    score = score_cov(seq, kappas)
    crlb = information_inverse(information)
    ascov = sandwich(information, score)

    gamma = None
    if theta0.size == 1:
        gamma = float(score[0, 0] / information[0, 0])

    is_bound = meanvar.is_exact_for(model)
    if not is_bound:
        logger.info(
            f"{meanvar_kind} information for sensor {model.sensor.display_name} is "
            f"{APPROXIMATION_LABEL}, not a bound"
        )

    return FisherReport(
        fim=information.tolist(),
        score_cov=score.tolist(),
        crlb=crlb.tolist(),
        ascov=ascov.tolist(),
        gamma=gamma,
        kappa_range=(float(kappas.min()), float(kappas.max())),
        meanvar_kind=meanvar_kind,
        kappa_source="unit" if unit_kappa else kappa_source,
        is_bound=is_bound,
        information_label=BOUND_LABEL if is_bound else APPROXIMATION_LABEL,
    )


class SweepPoint(BaseModel):
    """kappa, gamma and asymptotic variance at one noise level (var_e = var_v)."""

    var_v: float
    kappa: float
    gamma: float
    ascov: float


def gamma_kappa_sweep(
    sensor: PolynomialSensor,
    m0: float,
    variances: Sequence[float],
    kappa_source: KappaSource = "true",
) -> List[SweepPoint]:
    """kappa and gamma of the second-order criterion over a grid of equal noise variances."""
    points = []
    for var_v in variances:
        report = fim_result4(sensor, m0, var_v, var_v, kappa_source)
        points.append(
            SweepPoint(
                var_v=float(var_v),
                kappa=report.kappa_range[0],
                gamma=float(report.gamma),
                ascov=report.ascov[0][0],
            )
        )
    return points
