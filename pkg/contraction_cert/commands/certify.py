"""
certify: busca un certificado de contractividad según el tipo de sistema.

Exit 0 si hay certificado, 1 si no se encontró (nunca "infactible").
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from contraction_cert.formats.reports import build_report, dumps_report, write_output
from contraction_cert.formats.spec_file import SystemSpecFile, load_spec
from contraction_cert.services.certificates import (
    ContractionCertificate,
    CertificateMethod,
    firing_rate_osl,
    gradient_flow_certificate,
    implicit_nn_analyze,
    lti_l2_certificate,
    lure_certificate,
    metzler_linf_certificate,
)
from contraction_cert.services.discretization import find_contracting_step
from contraction_cert.services.interconnect import network_certificate, network_rate
from contraction_cert.services.norms import NormKind, NormSpec, log_norm, parse_norm_flag, spectral_summary
from contraction_cert.services.system_model import default_sampler, estimate_osl
from contraction_cert.utils.errors import NotHurwitzError

logger = logging.getLogger(__name__)

NO_CERTIFICATE = "no certificate found"


@dataclass
class CertifyOutcome:
    found: bool
    result: Dict[str, Any] = field(default_factory=dict)
    certificate: Optional[ContractionCertificate] = None

    @property
    def rate(self) -> Optional[float]:
        return self.certificate.rate if self.certificate is not None else None


def _found(cert: ContractionCertificate, **extra: Any) -> CertifyOutcome:
    if not cert.contracting:
        return CertifyOutcome(found=False, result={"message": NO_CERTIFICATE, "closest": cert.to_json(), **extra})
    return CertifyOutcome(found=True, result={"certificate": cert.to_json(), **extra}, certificate=cert)


def _certify_linear(spec: SystemSpecFile) -> CertifyOutcome:
    A = spec.params["A"]
    summary = spectral_summary(A)
    extra = {"spectral": summary.to_json()}
    norm = spec.norm
    if norm is not None and norm.base_kind != NormKind.LP:
        mu = log_norm(A, norm)
        if mu < 0.0:
            cert = ContractionCertificate(norm=norm, method=CertificateMethod.CLOSED_FORM, margin=-mu, rate=-mu)
            return _found(cert, **extra)
        logger.info(f"Requested norm {norm.label} does not certify (mu = {mu:.6g}); trying weighted norms")
    if summary.alpha >= 0.0:
        return CertifyOutcome(found=False, result={"message": NO_CERTIFICATE, "reason": "matrix is not Hurwitz", **extra})
    off = A - np.diag(np.diag(A))
    if np.all(off >= 0.0):
        return _found(metzler_linf_certificate(A), **extra)
    try:
        return _found(lti_l2_certificate(A, 0.9 * abs(summary.alpha)), **extra)
    except NotHurwitzError as e:
        return CertifyOutcome(found=False, result={"message": NO_CERTIFICATE, "reason": str(e), **extra})


def _certify_firing_rate(spec: SystemSpecFile) -> CertifyOutcome:
    cert = firing_rate_osl(spec.firing_rate_spec())
    f = spec.build_field()
    sampled = estimate_osl(f, cert.norm, default_sampler(f.dim))
    return _found(cert, sampled_osl=sampled.to_json())


def _certify_implicit_nn(spec: SystemSpecFile) -> CertifyOutcome:
    report = implicit_nn_analyze(spec.implicit_nn_spec())
    if not report.well_posed:
        return CertifyOutcome(found=False, result={"message": NO_CERTIFICATE, "analysis": report.to_json()})
    cert = ContractionCertificate(
        norm=NormSpec.linf(),
        method=CertificateMethod.CLOSED_FORM,
        margin=report.ct_rate,
        rate=report.ct_rate,
        notes=["recurrent model x' = -x + relu(Ax + Bu + b)"],
    )
    return _found(cert, analysis=report.to_json())


def _certify_network(spec: SystemSpecFile) -> CertifyOutcome:
    G = spec.gain_matrix()
    extra = {"gain_matrix": G.to_json(), "network_rate": network_rate(G)}
    cert = network_certificate(G)
    if cert is None:
        return CertifyOutcome(found=False, result={"message": NO_CERTIFICATE, **extra})
    return CertifyOutcome(found=True, result={"certificate": cert.to_json(), **extra})


def certify_system(spec: SystemSpecFile) -> CertifyOutcome:
    """Despacha al pipeline de certificación de cada tipo de sistema."""
    kind = spec.kind
    if kind == "linear":
        outcome = _certify_linear(spec)
    elif kind == "gradient_flow":
        p = spec.params
        if "double_well" in p:
            outcome = CertifyOutcome(
                found=False,
                result={"message": NO_CERTIFICATE, "reason": "double-well potential is not convex; use scan"},
            )
        else:
            cert = gradient_flow_certificate(Q=p["Q"]) if "Q" in p else gradient_flow_certificate(reg=p["reg"])
            outcome = _found(cert)
    elif kind == "firing_rate":
        outcome = _certify_firing_rate(spec)
    elif kind == "lure":
        cert = lure_certificate(spec.lure_spec())
        outcome = _found(cert) if cert is not None else CertifyOutcome(found=False, result={"message": NO_CERTIFICATE})
    elif kind == "implicit_nn":
        outcome = _certify_implicit_nn(spec)
    elif kind == "network":
        outcome = _certify_network(spec)
    else:
        outcome = CertifyOutcome(
            found=False,
            result={"message": NO_CERTIFICATE, "reason": "competitive networks contract only locally; use scan"},
        )

    if outcome.certificate is not None and outcome.certificate.rate is not None and kind != "network":
        step = find_contracting_step(spec.build_field(), outcome.certificate.norm)
        outcome.result["euler_step"] = step.to_json() if step is not None else None
    outcome.result["kind"] = kind
    return outcome


def run(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    if args.norm:
        spec.norm = parse_norm_flag(args.norm)
        spec.norm.check_dim(spec.params["n"])
    outcome = certify_system(spec)
    status = "found" if outcome.found else "not_found"
    if not outcome.found:
        logger.info(f"{spec.source}: {NO_CERTIFICATE}")
    text = dumps_report(build_report("certify", status, outcome.result, timestamp=args.timestamp))
    write_output(args.out, "certificate.json", text)
    print(text, end="")
    return 0 if outcome.found else 1


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("certify", parents=parents, help="Find a contraction certificate for a system spec")
    p.add_argument("spec", help="System spec JSON file")
    p.set_defaults(handler=run)
