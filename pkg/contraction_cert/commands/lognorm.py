"""lognorm: log norma, norma inducida y resumen espectral de una matriz."""

from __future__ import annotations

import argparse
import logging

from contraction_cert.formats.reports import build_report, dumps_report, write_output
from contraction_cert.formats.spec_file import load_matrix
from contraction_cert.services.norms import log_norm, matrix_norm, parse_norm_flag, spectral_summary

logger = logging.getLogger(__name__)


def run(args: argparse.Namespace) -> int:
    A = load_matrix(args.matrix)
    spec = parse_norm_flag(args.norm or "l2")
    spec.check_dim(A.shape[0])
    summary = spectral_summary(A)
    result = {
        "norm": spec.to_json(),
        "lognorm": log_norm(A, spec),
        "matrix_norm": matrix_norm(A, spec),
        "spectral": summary.to_json(),
    }
    text = dumps_report(build_report("lognorm", "ok", result, timestamp=args.timestamp))
    write_output(args.out, "lognorm.json", text)
    print(text, end="")
    return 0


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("lognorm", parents=parents, help="Log norm and spectral summary of a matrix")
    p.add_argument("matrix", help="JSON file with a square matrix (list of rows or {\"A\": ...})")
    p.set_defaults(handler=run)
