"""
Punto de entrada de la CLI.

Cada comando vive en contraction_cert/commands/<nombre>.py y se registra con
register(subparsers, parents). Aquí se traduce cualquier excepción al contrato
de exit codes:

    0  pass / found / ok
    1  resultado negativo (cota violada, sin certificado)
    2  error de parseo del archivo de entrada
    3  error de validación o dimensión
    4  falla numérica en tiempo de ejecución (explosión, punto fijo)
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from contraction_cert import __version__
from contraction_cert.commands import certify, lognorm, scan, simulate
from contraction_cert.formats.reports import build_report, dumps_report
from contraction_cert.utils import config
from contraction_cert.utils.errors import (
    DimensionError,
    EvaluationError,
    FixedPointError,
    IntegrationBlowUp,
    InvalidModelError,
    NotHurwitzError,
    NotMetzlerError,
    NumericalFailure,
    SpecFileError,
    UnsupportedNormError,
    WeightError,
)
from contraction_cert.utils.run_metrics import get_run_metrics

logger = logging.getLogger(__name__)

COMMANDS = (lognorm, certify, simulate, scan)

_VALIDATION_ERRORS = (DimensionError, WeightError, UnsupportedNormError, InvalidModelError, NotMetzlerError)
_RUNTIME_ERRORS = (IntegrationBlowUp, NumericalFailure, EvaluationError, FixedPointError)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--norm", default=None, help="l1 | l2 | linf | lp:<p> | wl2:<file> | winf:<file>")
    common.add_argument("--seed", type=int, default=None, help="Seed for sampled estimates")
    common.add_argument("--dt", type=float, default=None, help="Integration step")
    common.add_argument("--tspan", default=None, help="Time window 't0,t1'")
    common.add_argument("--out", default=None, help="Directory for JSON/CSV artifacts")
    common.add_argument(
        "--no-timestamp",
        dest="timestamp",
        action="store_const",
        const=False,
        default=None,
        help="Omit the report timestamp (byte-identical reruns)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contraction-cert",
        description="Contraction certificates for dynamical systems and their simulation checks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parents = [_common_parser()]
    for module in COMMANDS:
        module.register(subparsers, parents)
    return parser


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, SpecFileError):
        return exc.exit_code
    if isinstance(exc, _VALIDATION_ERRORS):
        return 3
    if isinstance(exc, _RUNTIME_ERRORS):
        return 4
    if isinstance(exc, NotHurwitzError):
        return 1
    return 4


def _error_result(exc: Exception) -> dict:
    result = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, SpecFileError) and exc.field:
        result["field"] = exc.field
    if isinstance(exc, IntegrationBlowUp):
        result["time"] = exc.time
    if isinstance(exc, NotHurwitzError) and exc.alpha is not None:
        result["alpha"] = exc.alpha
    return result


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, config.LOG_LEVEL, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    get_run_metrics().reset()

    try:
        return args.handler(args)
    except (SpecFileError, NotHurwitzError) + _VALIDATION_ERRORS + _RUNTIME_ERRORS as e:
        code = _exit_code_for(e)
        logger.error(f"{args.command} failed (exit {code}): {e}", exc_info=code == 4)
        get_run_metrics().record_error(args.command, str(e))
        report = build_report(args.command, "error", _error_result(e), timestamp=args.timestamp)
        print(dumps_report(report), end="")
        return code


if __name__ == "__main__":
    sys.exit(main())
