"""
Command-line entry point for Wiener system identification experiments.

Every subcommand is a thin adapter: one library call plus JSON/CSV formatting.
Exit codes: 0 success, 1 computation error, 2 usage or input-format error.
"""

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from core.config import Settings, get_settings
from core.exceptions import DataFormatError, WienerLabError
from modules.estimate import FitOptions, fit
from modules.fisher import fisher_report
from modules.likelihood import get_cost_function, list_cost_functions
from modules.moments import fourth_and_kappa
from modules.quadrature import MAX_ORDER, hermite_rule
from modules.system import constant_input, simulate
from services.experiments import TABLE1_ROWS, ExperimentService
from utils.logging_config import setup_logging
from utils.storage import (
    dataset_to_csv,
    format_number,
    load_dataset,
    load_model,
    load_series,
    save_dataset,
    save_model,
    table_to_csv,
    write_text,
)

logger = logging.getLogger(__name__)

ESTIMATORS = ["exact-ml", "gauss1", "gauss2", "cmp"]
MEANVAR_KINDS = ["gauss1", "gauss2", "cmp"]
RANDOM_SEED = "random"


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors are a single diagnostic line."""

    def error(self, message: str):
        self.exit(2, f"{self.prog}: error: {message}\n")


def _seed(value: str) -> Union[int, str]:
    """Integer seed, or "random" to draw one from the operating system."""
    if value == RANDOM_SEED:
        return value
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed: {value!r}")
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return seed


def _order(value: str) -> int:
    """Quadrature order in [1, MAX_ORDER]."""
    try:
        order = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid order: {value!r}")
    if not 1 <= order <= MAX_ORDER:
        raise argparse.ArgumentTypeError(f"order must lie in [1, {MAX_ORDER}], got {order}")
    return order


def _count(value: str) -> int:
    """Positive sample or realization count."""
    try:
        count = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count: {value!r}")
    if count < 1:
        raise argparse.ArgumentTypeError(f"count must be >= 1, got {count}")
    return count


def _rows(value: str) -> List[str]:
    rows = [row.strip() for row in value.split(",") if row.strip()]
    unknown = [row for row in rows if row not in TABLE1_ROWS]
    if not rows or unknown:
        raise argparse.ArgumentTypeError(
            f"rows must be a comma-separated subset of {','.join(TABLE1_ROWS)}"
        )
    return rows


def _round_floats(payload: Any, digits: int) -> Any:
    if isinstance(payload, float):
        return float(format_number(payload, digits))
    if isinstance(payload, dict):
        return {key: _round_floats(value, digits) for key, value in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [_round_floats(value, digits) for value in payload]
    return payload


def to_json(payload: Dict[str, Any], digits: int) -> str:
    return json.dumps(_round_floats(payload, digits), indent=2) + "\n"


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per library operation."""
    common = CliParser(add_help=False)
    common.add_argument("--digits", type=int, choices=range(1, 18), metavar="{1..17}",
                        help="Significant digits of numeric output (default: settings, 17)")
    common.add_argument("--out", help="Output file (default: standard output)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Log level on standard error")

    parser = CliParser(
        prog="wienerlab",
        description="Identification of stochastic Wiener systems with process noise",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = subparsers.add_parser("gh-nodes", parents=[common], help="Gauss-Hermite nodes and weights")
    p.add_argument("--order", type=_order, required=True, help="Number of nodes")

    p = subparsers.add_parser("moments", parents=[common], help="Predictor moments and kappa at z")
    p.add_argument("--model", required=True, help="Model JSON")
    p.add_argument("--z", type=float, required=True, help="Noise-free linear output")
    p.add_argument("--method", choices=["closed", "quadrature"], default="closed")
    p.add_argument("--gh-order", type=_order, help="Quadrature order for --method quadrature")

    p = subparsers.add_parser("nll", parents=[common], help="Negative log-likelihood of a dataset")
    p.add_argument("--method", choices=list_cost_functions(), required=True)
    p.add_argument("--model", required=True, help="Model JSON (theta is evaluated)")
    p.add_argument("--data", required=True, help="Dataset CSV with header t,u,y")
    p.add_argument("--gh-order", type=_order, help="Quadrature order of the exact likelihood")

    p = subparsers.add_parser("analyze", parents=[common], help="Fisher information and sandwich covariance")
    p.add_argument("--model", required=True, help="Model JSON (theta is the true value)")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--u", help="CSV with an input column u")
    source.add_argument("--constant-input", action="store_true", help="u_t = 1 (default)")
    p.add_argument("--samples", type=_count, default=1000, help="N for the constant input and normalized_std")
    p.add_argument("--method", choices=MEANVAR_KINDS, default="cmp")
    p.add_argument("--kappa", choices=["true", "model"], default="true")
    p.add_argument("--unit-kappa", action="store_true", help="Force kappa = 1")
    p.add_argument("--check-gradients", action="store_true")

    p = subparsers.add_parser("estimate", parents=[common], help="Fit theta to a dataset")
    p.add_argument("--method", choices=ESTIMATORS, required=True)
    p.add_argument("--model", required=True, help="Model JSON (sensor and noise variances)")
    p.add_argument("--data", required=True, help="Dataset CSV with header t,u,y")
    p.add_argument("--positive", action="store_true", help="Restrict a scalar theta to > 0")
    p.add_argument("--theta0", type=float, nargs="+", help="Initial theta")
    p.add_argument("--gh-order", type=_order, help="Quadrature order for exact-ml")
    p.add_argument("--save-model", help="Also write the fitted model JSON here")

    p = subparsers.add_parser("simulate", parents=[common], help="Simulate a dataset")
    p.add_argument("--model", required=True, help="Model JSON")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--u", help="CSV with an input column u")
    source.add_argument("--constant-input", action="store_true", help="u_t = 1")
    p.add_argument("--samples", type=_count, default=1000, help="N for the constant input")
    p.add_argument("--seed", type=_seed, help="64-bit seed or 'random'")

    p = subparsers.add_parser("table1", parents=[common], help="Sensor comparison table over the noise grid")
    p.add_argument("--rows", type=_rows, default=list(TABLE1_ROWS))
    p.add_argument("--realizations", type=_count, default=250)
    p.add_argument("--samples", type=_count, default=1000)
    p.add_argument("--gh-order", type=_order)
    p.add_argument("--eq45-variant", action="store_true",
                   help="Also report the worked-expression variant of the asymptotic rows")
    p.add_argument("--seed", type=_seed, help="Base seed or 'random'")

    p = subparsers.add_parser("consistency", parents=[common], help="Monte Carlo vs sandwich covariance")
    p.add_argument("--model", required=True, help="Scalar model JSON (theta is the truth)")
    p.add_argument("--method", choices=ESTIMATORS, default="cmp")
    p.add_argument("--samples", type=_count, default=10000)
    p.add_argument("--realizations", type=_count, default=500)
    p.add_argument("--kappa", choices=["true", "model"], default="true")
    p.add_argument("--unit-kappa", action="store_true", help="Compare against kappa = 1")
    p.add_argument("--positive", action="store_true")
    p.add_argument("--gh-order", type=_order)
    p.add_argument("--seed", type=_seed, help="Base seed or 'random'")

    return parser


def _resolve_seed(args: argparse.Namespace, settings: Settings) -> int:
    if args.seed is None:
        return settings.default_seed
    if args.seed == RANDOM_SEED:
        seed = int(np.random.SeedSequence().entropy) % 2**64
        logger.info(f"Using random seed {seed}")
        return seed
    return args.seed


def _input(args: argparse.Namespace) -> np.ndarray:
    if args.u:
        return load_series(args.u, "u")
    return constant_input(args.samples)


def cmd_gh_nodes(args, settings: Settings, digits: int) -> str:
    rule = hermite_rule(args.order)
    return table_to_csv(
        ["node", "weight"], [[float(x), float(w)] for x, w in zip(rule.nodes, rule.weights)], digits
    )


def cmd_moments(args, settings: Settings, digits: int) -> str:
    model = load_model(args.model)
    rule = hermite_rule(args.gh_order or settings.gh_order_moments)
    report = fourth_and_kappa(model, args.z, args.method, rule)
    return to_json(report.model_dump(), digits)


def cmd_nll(args, settings: Settings, digits: int) -> str:
    model = load_model(args.model)
    data = load_dataset(args.data)
    rule = hermite_rule(args.gh_order or settings.gh_order_likelihood)
    cost = get_cost_function(args.method)(model, data.u_array, data.y_array, rule)
    return format_number(cost, digits) + "\n"


def cmd_analyze(args, settings: Settings, digits: int) -> str:
    model = load_model(args.model)
    u = _input(args)
    report = fisher_report(
        model, model.theta, u, args.method, args.kappa, args.unit_kappa, args.check_gradients
    )
    payload = report.model_dump()
    payload["normalized_std"] = report.normalized_std(u.size)
    return to_json(payload, digits)


def cmd_estimate(args, settings: Settings, digits: int) -> str:
    model = load_model(args.model)
    data = load_dataset(args.data)
    options = FitOptions(
        positive=args.positive,
        theta0=args.theta0,
        gh_order=args.gh_order or settings.gh_order_likelihood,
    )
    result = fit(data.u_array, data.y_array, model, args.method, options)
    if args.save_model:
        save_model(model.with_theta(result.theta_hat), args.save_model)
    return to_json(result.model_dump(), digits)


def cmd_simulate(args, settings: Settings, digits: int) -> Optional[str]:
    model = load_model(args.model)
    dataset = simulate(model, _input(args), _resolve_seed(args, settings))
    if args.out:
        save_dataset(dataset, args.out, digits)
        return None
    return dataset_to_csv(dataset, digits)


def cmd_table1(args, settings: Settings, digits: int) -> str:
    table = ExperimentService(settings).table1(
        rows=args.rows,
        samples=args.samples,
        realizations=args.realizations,
        gh_order=args.gh_order,
        eq45_variant=args.eq45_variant,
        seed=_resolve_seed(args, settings),
    )
    return table.to_csv(digits)


def cmd_consistency(args, settings: Settings, digits: int) -> str:
    report = ExperimentService(settings).consistency_check(
        load_model(args.model),
        args.method,
        args.samples,
        args.realizations,
        seed=_resolve_seed(args, settings),
        gh_order=args.gh_order,
        kappa_source=args.kappa,
        force_unit_kappa=args.unit_kappa,
        positivity=args.positive,
    )
    return to_json(report.model_dump(), digits)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Settings, int], Optional[str]]] = {
    "gh-nodes": cmd_gh_nodes,
    "moments": cmd_moments,
    "nll": cmd_nll,
    "analyze": cmd_analyze,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "table1": cmd_table1,
    "consistency": cmd_consistency,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, dispatch one subcommand and write its output.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        int: Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, settings.log_file)
    digits = args.digits or settings.digits

    try:
        output = COMMANDS[args.command](args, settings, digits)
        if output is not None:
            write_text(output, args.out)
    except DataFormatError as e:
        print(f"error in {e.module or 'input'}: {e.message}", file=sys.stderr)
        return 2
    except ValidationError as e:
        print(f"error in {args.command}: {e.errors()[0]['msg']}", file=sys.stderr)
        return 2
    except WienerLabError as e:
        print(f"error in {e.module or args.command}: {e.message}", file=sys.stderr)
        return 1

    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
