"""
simulate: integra el sistema y verifica una cota garantizada.

--check incremental | iiss | tracking. Exit 0 si la cota se cumple, 1 si no,
4 si la integración explota.
"""

from __future__ import annotations

import argparse
import logging
from typing import List, Optional, Tuple

import numpy as np

from contraction_cert.commands.certify import certify_system
from contraction_cert.formats.reports import build_report, dumps_report, write_output
from contraction_cert.formats.spec_file import SimulationBlock, SystemSpecFile, load_spec
from contraction_cert.services.norms import NormSpec, parse_norm_flag
from contraction_cert.services.simulate import (
    BoundCheck,
    default_dt,
    incremental_stability_check,
    verify_equilibrium_tracking,
    verify_iiss_bound,
)
from contraction_cert.services.system_model import VectorFieldSpec, default_sampler, estimate_lip_theta
from contraction_cert.utils.errors import SpecFileError

logger = logging.getLogger(__name__)

CHECKS = ("incremental", "iiss", "tracking")


def _parse_tspan(text: Optional[str]) -> Optional[Tuple[float, float]]:
    if not text:
        return None
    parts = text.split(",")
    try:
        t0, t1 = (float(p) for p in parts)
    except ValueError:
        raise SpecFileError(f"--tspan expects 't0,t1', got '{text}'", field="--tspan")
    if not t1 > t0:
        raise SpecFileError("--tspan requires t0 < t1", field="--tspan")
    return t0, t1


def _norm_and_rate(spec: SystemSpecFile, sim: SimulationBlock) -> Tuple[NormSpec, float, str, Optional[NormSpec]]:
    """
    La tasa explícita del bloque de simulación manda; si no, la del certificado.

    Una tasa certificada solo vale en la norma del certificado (con sus pesos),
    así que esa norma reemplaza a la pedida; la pedida se devuelve aparte
    para el reporte.
    """
    if sim.rate is not None:
        if not sim.rate > 0.0:
            raise SpecFileError("simulation.rate must be > 0", field="simulation.rate")
        return spec.norm_or_default(), float(sim.rate), "simulation.rate", None
    outcome = certify_system(spec)
    if not outcome.found or outcome.rate is None:
        raise SpecFileError(
            "no certified rate available; provide simulation.rate", field="simulation.rate"
        )
    cert_norm = outcome.certificate.norm
    requested = spec.norm
    if requested is not None and requested.to_json() == cert_norm.to_json():
        requested = None
    if requested is not None:
        logger.warning(
            f"{spec.source}: certificate lives in {cert_norm.label}, not the requested {requested.label}; "
            f"checking bounds in the certificate norm"
        )
    return cert_norm, float(outcome.rate), f"certificate ({outcome.certificate.method.value})", requested


def _initial_pairs(f: VectorFieldSpec, sim: SimulationBlock, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    if sim.x0 is not None and sim.y0 is not None:
        return [(sim.x0, sim.y0)]
    rng = np.random.default_rng(seed)
    box = f.domain
    pairs = []
    for _ in range(sim.pairs):
        x0 = sim.x0 if sim.x0 is not None else box.lo + rng.random(f.dim) * box.widths
        y0 = box.lo + rng.random(f.dim) * box.widths
        pairs.append((x0, y0))
    return pairs


def _worst(checks: List[BoundCheck]) -> BoundCheck:
    return max(checks, key=lambda c: c.max_violation)


def run(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.norm:
        spec.norm = parse_norm_flag(args.norm)
        spec.norm.check_dim(spec.params["n"])
    if spec.simulation is None:
        raise SpecFileError("spec has no simulation block", field="simulation")
    if spec.is_network:
        raise SpecFileError("network specs carry no state dynamics to simulate", field="system.network")
    sim = spec.simulation
    t_span = _parse_tspan(args.tspan) or sim.t_span
    seed = args.seed if args.seed is not None else sim.seeds[0]
    check = args.check
    tol = args.tol

    norm, rate, rate_source, requested = _norm_and_rate(spec, sim)
    dt = args.dt or sim.dt or default_dt(rate)
    result = {"check": check, "norm": norm.to_json(), "rate": rate, "rate_source": rate_source, "dt": dt, "t_span": list(t_span)}
    if requested is not None:
        result["requested_norm"] = requested.to_json()

    if check == "incremental":
        f = spec.build_field()
        checks = [
            incremental_stability_check(f, norm, rate, x0, y0, t_span, dt, tol=tol)
            for x0, y0 in _initial_pairs(f, sim, seed)
        ]
    else:
        if sim.input is None:
            raise SpecFileError(f"--check {check} requires simulation.input", field="simulation.input")
        f = spec.build_field(parametric=True)
        ell = sim.ell
        if ell is None:
            theta_norm = NormSpec(norm.base_kind) if norm.is_weighted else norm
            bound = estimate_lip_theta(f, norm, theta_norm, default_sampler(f.dim + f.theta_dim, seed))
            ell = bound.value
            result["ell_estimate"] = bound.to_json()
        result["ell"] = ell
        x0 = sim.x0 if sim.x0 is not None else f.domain.center
        if check == "iiss":
            if sim.input_y is None:
                raise SpecFileError("--check iiss requires simulation.input_y", field="simulation.input_y")
            y0 = sim.y0 if sim.y0 is not None else x0
            checks = [verify_iiss_bound(f, norm, rate, ell, x0, y0, sim.input, sim.input_y, t_span, dt, tol=tol)]
        else:
            checks = [verify_equilibrium_tracking(f, norm, rate, ell, sim.input, x0, t_span, dt, tol=tol)]

    worst = _worst(checks)
    passes = all(c.passes for c in checks)
    result.update({"passes": passes, "pairs": len(checks), "worst": worst.to_json()})
    if not passes:
        logger.warning(f"{spec.source}: {check} bound violated by {worst.max_violation:.3e} at t={worst.t_worst:.4g}")

    traj_x, traj_y = worst.trajectories
    write_output(args.out, "trajectory_x.csv", traj_x.to_csv())
    write_output(args.out, "trajectory_y.csv" if check != "tracking" else "equilibrium.csv", traj_y.to_csv())
    text = dumps_report(build_report("simulate", "pass" if passes else "fail", result, timestamp=args.timestamp))
    write_output(args.out, "simulate.json", text)
    print(text, end="")
    return 0 if passes else 1


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("simulate", parents=parents, help="Simulate a system and check a guaranteed bound")
    p.add_argument("spec", help="System spec JSON file with a simulation block")
    p.add_argument("--check", choices=CHECKS, default="incremental", help="Bound to verify (default incremental)")
    p.add_argument("--tol", type=float, default=1e-6, help="Allowed absolute violation (default 1e-6)")
    p.set_defaults(handler=run)
