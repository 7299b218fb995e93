#!/usr/bin/env python3
"""
Barrido rápido de consistencia de las normas logarítmicas.

1. Fórmulas cerradas de μ contra el oráculo por definición de límite
   (ℓ1, ℓ2, ℓ∞, ℓ2 ponderada, ℓ∞ ponderada) sobre matrices aleatorias.
2. Cotas espectrales ‖A‖ ≥ ρ(A) y μ(A) ≥ α(A).

Usage:
    python3 tools/oracle_suite.py
    # o con otra semilla / tamaño
    ORACLE_SEED=7 ORACLE_MATRICES=50 python3 tools/oracle_suite.py

Sale con 1 si hay alguna discrepancia.
"""

import json
import os
import sys
import time

import numpy as np

ORACLE_REL_TOL = 1e-6
SPECTRAL_SLACK = 1e-10


def _random_spd(rng, n):
    M = rng.standard_normal((n, n))
    return M @ M.T + n * np.eye(n)


def _norm_specs(rng, n):
    from contraction_cert.services.norms import NormSpec

    return [
        NormSpec.l1(),
        NormSpec.l2(),
        NormSpec.linf(),
        NormSpec.weighted_l2(_random_spd(rng, n)),
        NormSpec.weighted_linf(rng.uniform(0.5, 2.0, size=n)),
    ]


def oracle_sweep(rng, count):
    from contraction_cert.services.norms import log_norm, log_norm_limit_oracle

    failures = []
    worst = 0.0
    for i in range(count):
        n = int(rng.integers(1, 7))
        A = rng.standard_normal((n, n))
        for spec in _norm_specs(rng, n):
            closed = log_norm(A, spec)
            oracle = log_norm_limit_oracle(A, spec)
            rel = abs(closed - oracle) / max(1.0, abs(closed))
            worst = max(worst, rel)
            if rel > ORACLE_REL_TOL:
                failures.append({"matrix": i, "norm": spec.label, "closed_form": closed, "oracle": oracle})
    return {"checked": count * 5, "worst_relative_gap": worst, "failures": failures}


def spectral_sweep(rng, count):
    from contraction_cert.services.norms import log_norm, matrix_norm, spectral_summary

    violations = []
    for i in range(count):
        n = int(rng.integers(1, 9))
        A = rng.standard_normal((n, n)) * rng.uniform(0.1, 5.0)
        summary = spectral_summary(A)
        for spec in _norm_specs(rng, n):
            if matrix_norm(A, spec) < summary.rho - SPECTRAL_SLACK:
                violations.append({"matrix": i, "norm": spec.label, "bound": "norm>=rho"})
            if log_norm(A, spec) < summary.alpha - SPECTRAL_SLACK:
                violations.append({"matrix": i, "norm": spec.label, "bound": "lognorm>=alpha"})
    return {"checked": count, "violations": violations}


def main():
    seed = int(os.getenv("ORACLE_SEED", "0") or 0)
    count = int(os.getenv("ORACLE_MATRICES", "100") or 100)

    try:
        import contraction_cert  # noqa: F401
    except ImportError as e:
        print(f"Error importing contraction_cert: {e}", file=sys.stderr)
        print("Make sure PYTHONPATH includes the repo root.", file=sys.stderr)
        sys.exit(1)

    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    oracle = oracle_sweep(rng, count)
    spectral = spectral_sweep(rng, 10 * count)
    elapsed = time.perf_counter() - started

    result = {
        "seed": seed,
        "oracle": oracle,
        "spectral": spectral,
        "seconds": round(elapsed, 3),
    }
    print(json.dumps(result, indent=2, ensure_ascii=False))

    if oracle["failures"] or spectral["violations"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
