"""scan: campo de log normas μ(DF(x)) sobre una grilla y bola de contracción local."""

from __future__ import annotations

import argparse
import logging

from contraction_cert.formats.reports import build_report, dumps_report, mu_field_csv, write_output
from contraction_cert.formats.spec_file import load_spec
from contraction_cert.services.norms import parse_norm_flag
from contraction_cert.services.regions import classify_log_norm_sup, local_contraction_scan
from contraction_cert.services.system_model import Sampler, default_sampler
from contraction_cert.utils import config
from contraction_cert.utils.errors import SpecFileError

logger = logging.getLogger(__name__)


def run(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.norm:
        spec.norm = parse_norm_flag(args.norm)
        spec.norm.check_dim(spec.params["n"])
    if spec.is_network:
        raise SpecFileError("network specs carry no state dynamics to scan", field="system.network")
    f = spec.build_field()
    n = f.dim
    if args.grid is not None:
        if n > config.GRID_MAX_DIM:
            raise SpecFileError(
                f"--grid supports state dimension <= {config.GRID_MAX_DIM}, got {n}; omit --grid to use sampling",
                field="--grid",
            )
        if args.grid < 2:
            raise SpecFileError("--grid needs at least 2 points per axis", field="--grid")
        sampler = Sampler.uniform_grid(args.grid)
    else:
        sampler = default_sampler(n, args.seed if args.seed is not None else config.DEFAULT_SEED)

    norm = spec.norm_or_default()
    scan = local_contraction_scan(f, norm, sampler)
    classification, rate = classify_log_norm_sup(float(scan.mu.max()))
    result = scan.to_json()
    result.update({"kind": spec.kind, "sampler": sampler.to_json(), "classification": classification.value, "rate": rate})

    write_output(args.out, "mu_field.csv", mu_field_csv(scan.points, scan.mu))
    status = "found" if scan.ball is not None else "not_found"
    text = dumps_report(build_report("scan", status, result, timestamp=args.timestamp))
    write_output(args.out, "scan.json", text)
    print(text, end="")
    return 0


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("scan", parents=parents, help="Scan the log norm of the Jacobian over the domain")
    p.add_argument("spec", help="System spec JSON file")
    p.add_argument("--grid", type=int, default=None, help="Grid points per axis (state dimension <= 3)")
    p.set_defaults(handler=run)
