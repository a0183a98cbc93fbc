"""
Monte Carlo harness, the sensor comparison table and asymptotic consistency checks.

Realization r of a run with base seed S is simulated with seed
S XOR splitmix64(r), so every realization is an independent task and the
result does not depend on execution order or on the number of threads.
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from core.config import Settings
from core.exceptions import HarnessError, InvalidArgumentError, WienerLabError
from modules.estimate import EstimatorMethod, FitOptions, safe_fit
from modules.fisher import fim_result4, fisher_report
from modules.moments import KappaSource
from modules.sensor import PolynomialSensor
from modules.system import WienerModel, constant_input, simulate
from utils.storage import table_to_csv

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

TABLE1_VARIANCES = (0.1, 0.25, 0.5, 0.75, 1.0)
TABLE1_ROWS = ("linear", "quadratic", "ml2", "cubic", "ml3")
TABLE1_TRUE_MEAN = 1.0


def splitmix64(value: int) -> int:
    """One step of the splitmix64 generator, used as a 64-bit integer hash."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def realization_seed(base_seed: int, realization: int) -> int:
    """Seed of realization r: base_seed XOR splitmix64(r)."""
    return (int(base_seed) & MASK64) ^ splitmix64(int(realization))


class MonteCarloConfig(BaseModel):
    """One Monte Carlo cell: truth, estimator and sample sizes."""

    model: WienerModel
    method: EstimatorMethod = "exact-ml"
    samples_per_run: int = Field(default=1000, ge=1)
    realizations: int = Field(default=250, ge=1)
    base_seed: int = Field(default=20190101, ge=0, lt=2**64)
    gh_order: int = Field(default=100, ge=1)
    positivity: bool = False
    cost_model: Optional[WienerModel] = None
    input: Optional[List[float]] = None


class MonteCarloReport(BaseModel):
    """Estimates in realization order (None for failed fits) and their statistics."""

    estimates: List[Optional[List[float]]]
    sample_mean: List[float]
    sample_std: List[float]
    bias: List[float]
    theory_std: Optional[List[float]] = None
    failures: int = 0
    runtime_seconds: float = 0.0


class Table1Row(BaseModel):
    name: str
    values: List[float]


class Table1(BaseModel):
    """Normalized standard deviations over the noise grid (var_e = var_v, m_o = 1)."""

    variances: List[float]
    samples: int
    rows: List[Table1Row]

    def row(self, name: str) -> List[float]:
        for entry in self.rows:
            if entry.name == name:
                return entry.values
        raise KeyError(name)

    def to_csv(self, digits: int = 17) -> str:
        header = ["row"] + [f"{v:g}" for v in self.variances]
        return table_to_csv(header, [[r.name] + list(r.values) for r in self.rows], digits)


class ConsistencyReport(BaseModel):
    """Monte Carlo spread against the sandwich prediction."""

    samples: int
    realizations: int
    meanvar_kind: str
    kappa_source: str
    empirical_normalized_std: float
    theoretical_normalized_std: float
    ratio: float
    chi_band: float
    failures: int


class ExperimentService:
    """Service running seeded Monte Carlo experiments."""

    def __init__(self, settings: Settings):
        """
        Initialize the experiment service.

        Args:
            settings: Application settings
        """
        self.settings = settings

    def _workers(self) -> int:
        threads = self.settings.threads
        if threads <= 0:
            threads = os.cpu_count() or 1
        return max(1, threads)

    def monte_carlo(self, config: MonteCarloConfig) -> MonteCarloReport:
        """
        Simulate and fit R independent realizations.

        Raises:
            HarnessError: If more than the allowed fraction of fits fail
        """
        start_time = time.perf_counter()
        truth = config.model
        template = config.cost_model or truth
        if template.nb != truth.nb:
            raise InvalidArgumentError("cost_model must have the same FIR length as the truth", "experiments")

        if config.input is not None:
            u = np.asarray(config.input, dtype=float)
            if u.size != config.samples_per_run:
                raise InvalidArgumentError("input length must equal samples_per_run", "experiments")
        else:
            u = constant_input(config.samples_per_run)

        options = FitOptions(positive=config.positivity, gh_order=config.gh_order)

        def run(realization: int) -> Optional[List[float]]:
            data = simulate(truth, u, realization_seed(config.base_seed, realization))
            result = safe_fit(u, data.y_array, template, config.method, options)
            if result is None or not result.converged:
                return None
            return result.theta_hat

        workers = min(self._workers(), config.realizations)
        logger.info(
            f"Monte Carlo: {config.realizations} realizations of {config.samples_per_run} samples, "
            f"method {config.method}, {workers} worker(s)"
        )
        if workers == 1:
            estimates = [run(r) for r in range(config.realizations)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                estimates = list(executor.map(run, range(config.realizations)))

        failures = sum(1 for estimate in estimates if estimate is None)
        if failures > self.settings.max_failure_fraction * config.realizations:
            raise HarnessError(
                f"{failures} of {config.realizations} fits failed "
                f"(limit {self.settings.max_failure_fraction:.0%})",
                failures=failures,
                total=config.realizations,
            )
        if failures:
            logger.warning(f"{failures} failed fits excluded from the statistics")

        successful = np.array([e for e in estimates if e is not None], dtype=float).reshape(
            -1, truth.nb
        )
        sample_mean = successful.mean(axis=0)
        if successful.shape[0] > 1:
            sample_std = successful.std(axis=0, ddof=1)
        else:
            sample_std = np.zeros(truth.nb)

        runtime = time.perf_counter() - start_time
        logger.info(f"Monte Carlo finished in {runtime:.1f}s, sample std {sample_std.tolist()}")

        return MonteCarloReport(
            estimates=estimates,
            sample_mean=sample_mean.tolist(),
            sample_std=sample_std.tolist(),
            bias=(sample_mean - truth.theta_array).tolist(),
            theory_std=self._theory_std(truth, u, config.method),
            failures=failures,
            runtime_seconds=runtime,
        )

    def _theory_std(
        self, truth: WienerModel, u: np.ndarray, method: str
    ) -> Optional[List[float]]:
        kind = method if method in ("gauss1", "gauss2", "cmp") else "cmp"
        try:
            report = fisher_report(truth, truth.theta, u, kind)
        except WienerLabError as exc:
            logger.info(f"No asymptotic companion: {exc.message}")
            return None
        return report.normalized_std(u.size)

    def table1(
        self,
        rows: Sequence[str] = TABLE1_ROWS,
        samples: int = 1000,
        realizations: int = 250,
        gh_order: Optional[int] = None,
        eq45_variant: bool = False,
        seed: Optional[int] = None,
        variances: Sequence[float] = TABLE1_VARIANCES,
    ) -> Table1:
        """
        Normalized standard deviations of m-hat for linear, quadratic and cubic sensors.

        Args:
            rows: Any of linear, quadratic, ml2, cubic, ml3 (emitted in that order)
            samples: Observations per realization N
            realizations: Monte Carlo realizations R for the ml rows
            gh_order: Quadrature order of the exact ML cost
            eq45_variant: Also report the worked-expression variant of the
                asymptotic rows
            seed: Base seed for the ml rows (shared by every cell)
            variances: Process noise grid; var_e = var_v throughout
        """
        unknown = set(rows) - set(TABLE1_ROWS)
        if unknown:
            raise InvalidArgumentError(f"Unknown table rows: {sorted(unknown)}", "experiments")

        gh_order = gh_order or self.settings.gh_order_likelihood
        seed = self.settings.default_seed if seed is None else seed
        sensors = {"quadratic": PolynomialSensor.quadratic(), "cubic": PolynomialSensor.cubic()}
        ml_sensors = {"ml2": sensors["quadratic"], "ml3": sensors["cubic"]}

        table_rows: List[Table1Row] = []
        for name in TABLE1_ROWS:
            if name not in rows:
                continue

            if name == "linear":
                values = [float(np.sqrt(2.0 * s / samples)) for s in variances]
                table_rows.append(Table1Row(name=name, values=values))

            elif name in sensors:
                for variant in ([False, True] if eq45_variant else [False]):
                    values = [
                        fim_result4(sensors[name], TABLE1_TRUE_MEAN, s, s, eq45_variant=variant)
                        .normalized_std(samples)[0]
                        for s in variances
                    ]
                    label = f"{name}_eq45" if variant else name
                    table_rows.append(Table1Row(name=label, values=values))

            else:
                values = []
                for s in variances:
                    config = MonteCarloConfig(
                        model=WienerModel(
                            theta=(TABLE1_TRUE_MEAN,), sensor=ml_sensors[name], var_v=s, var_e=s
                        ),
                        method="exact-ml",
                        samples_per_run=samples,
                        realizations=realizations,
                        base_seed=seed,
                        gh_order=gh_order,
                        positivity=True,
                    )
                    values.append(self.monte_carlo(config).sample_std[0])
                table_rows.append(Table1Row(name=name, values=values))

            logger.info(f"Table row {name} done")

        return Table1(variances=list(variances), samples=samples, rows=table_rows)

    def consistency_check(
        self,
        model: WienerModel,
        method: EstimatorMethod,
        samples: int,
        realizations: int,
        seed: Optional[int] = None,
        gh_order: Optional[int] = None,
        kappa_source: KappaSource = "true",
        force_unit_kappa: bool = False,
        positivity: bool = False,
    ) -> ConsistencyReport:
        """
        Compare sqrt(N) * sample std of the estimates against sqrt(AsCov).

        The Monte Carlo estimates come from ``method``; the prediction is the
        sandwich covariance of the matching mean/variance model (cmp for
        exact-ml). ``force_unit_kappa`` replaces the sandwich by the Gaussian
        inverse information.

        Raises:
            InvalidArgumentError: If the model is not scalar
        """
        if model.nb != 1:
            raise InvalidArgumentError("Consistency checks need a scalar model", "experiments")

        config = MonteCarloConfig(
            model=model,
            method=method,
            samples_per_run=samples,
            realizations=realizations,
            base_seed=self.settings.default_seed if seed is None else seed,
            gh_order=gh_order or self.settings.gh_order_likelihood,
            positivity=positivity,
        )
        mc = self.monte_carlo(config)

        kind = method if method in ("gauss1", "gauss2", "cmp") else "cmp"
        report = fisher_report(
            model, model.theta, constant_input(samples), kind, kappa_source, unit_kappa=force_unit_kappa
        )
        theory = float(np.sqrt(report.ascov[0][0]))
        empirical = float(np.sqrt(samples) * mc.sample_std[0])

        return ConsistencyReport(
            samples=samples,
            realizations=realizations,
            meanvar_kind=kind,
            kappa_source=report.kappa_source,
            empirical_normalized_std=empirical,
            theoretical_normalized_std=theory,
            ratio=empirical / theory,
            chi_band=3.0 / np.sqrt(2.0 * realizations),
            failures=mc.failures,
        )
