import argparse
from typing import Dict, Tuple

from src.cli.dependencies import float_list, kernel_list
from src.schemas.channel import KernelFamily
from src.schemas.run_config import OutputFormat, TraceFormat

SCHEMA_MODELS = ("params", "simulate", "table", "scaling", "diagnose", "pmf", "report", "ge-params")


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="flat key=value file; explicit flags win")
    parent.add_argument(
        "--format",
        dest="output_format",
        choices=[f.value for f in OutputFormat],
        help="output encoding (default csv)",
    )
    parent.add_argument("--output", "-o", help="output file (default stdout)")
    parent.add_argument("--log-level", help="override LOG_LEVEL")
    return parent


def _link_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--sigma", type=float, help="marginal standard deviation (default 1)")
    parent.add_argument("--d", type=float, help="slot duration D (default 1)")
    parent.add_argument(
        "--s", type=float_list, help="normalized threshold(s) S/sigma, comma separated"
    )
    return parent


def _monte_carlo_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--n-slots", type=int, help="slots per replication")
    parent.add_argument("--n-reps", type=int, help="independent replications")
    parent.add_argument(
        "--seed", type=int, help="base seed; each grid point draws its own stream from it"
    )
    parent.add_argument("--jobs", type=int, help="grid points run concurrently")
    return parent


def _kernel_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--kernel",
        type=str.lower,
        choices=[k.value for k in KernelFamily],
        help="covariance kernel (default sqexp)",
    )


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    """
    Build the command-line parser

    Returns:
        The top-level parser and the subparser of every command, keyed by name
    """
    parser = argparse.ArgumentParser(
        prog="ge-bridge",
        description="Gilbert-Elliott parameters from stationary Gaussian fading kernels",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    params = commands.add_parser(
        "params", parents=[_common_options(), _link_options()], help="closed-form GE parameters"
    )
    _kernel_option(params)
    params.add_argument(
        "--tc", type=float, help="kernel correlation length T_c in time units (not T_c/D)"
    )
    params.add_argument("--rho", type=float, help="raw one-step correlation; bypasses the kernel")
    subparsers["params"] = params

    simulate = commands.add_parser(
        "simulate",
        parents=[_common_options(), _link_options(), _monte_carlo_options()],
        help="Monte Carlo traces and transition estimates",
    )
    _kernel_option(simulate)
    simulate.add_argument(
        "--tc", type=float, help="kernel correlation length T_c in time units (not T_c/D)"
    )
    simulate.add_argument("--trace-dir", help="write thresholded traces here")
    simulate.add_argument(
        "--trace-format", choices=[f.value for f in TraceFormat], help="trace encoding"
    )
    simulate.add_argument("--paths-output", help="write the first Gaussian paths here")
    simulate.add_argument("--n-paths", type=int, help="paths written by --paths-output")
    subparsers["simulate"] = simulate

    table = commands.add_parser(
        "validate-table",
        parents=[_common_options(), _link_options(), _monte_carlo_options()],
        help="fidelity table over T_c/D, S/sigma and kernel",
    )
    table.add_argument(
        "--tc-grid",
        type=float_list,
        default="2,5,8,10,15",
        help="T_c/D ratios, comma separated; T_c = ratio x D",
    )
    table.add_argument("--kernels", type=kernel_list, default="sqexp,exp")
    table.add_argument(
        "--grid", nargs="+", help="subset selectors on T_c/D, S/sigma, kernel: tc=2 s=0 kernel=sqexp"
    )
    table.add_argument(
        "--strict", action="store_true", default=None, help="exit 3 outside reference tolerances"
    )
    table.set_defaults(s="0,0.5,1")
    subparsers["validate-table"] = table

    scaling = commands.add_parser(
        "scaling",
        parents=[_common_options(), _link_options(), _monte_carlo_options()],
        help="persistence time versus T_c: exact, asymptote, Monte Carlo",
    )
    _kernel_option(scaling)
    scaling.add_argument(
        "--tc-grid",
        type=float_list,
        default="20,30,40,50,60,70,80,90,100",
        help="T_c/D ratios, comma separated; T_c = ratio x D",
    )
    scaling.add_argument(
        "--no-mc", dest="mc", action="store_false", default=None, help="closed forms only"
    )
    subparsers["scaling"] = scaling

    diagnose = commands.add_parser(
        "diagnose",
        parents=[_common_options(), _link_options(), _monte_carlo_options()],
        help="Markov gaps and run-length distributions",
    )
    diagnose.add_argument(
        "--tc-grid",
        type=float_list,
        default="8",
        help="T_c/D ratios, comma separated; T_c = ratio x D",
    )
    diagnose.add_argument("--kernels", type=kernel_list, default="sqexp,exp")
    diagnose.add_argument("--pmf-output", help="write long-format run-length PMFs here")
    subparsers["diagnose"] = diagnose

    schema = commands.add_parser(
        "schema", parents=[_common_options()], help="JSON schema of command output"
    )
    schema.add_argument("--model", choices=SCHEMA_MODELS, help="document to describe")
    subparsers["schema"] = schema

    return parser, subparsers
