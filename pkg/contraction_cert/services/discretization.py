"""
Discretización de Euler, búsqueda de paso contractivo e iteración de Banach.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from contraction_cert.services.norms import NormSpec, matrix_norm, vector_norm
from contraction_cert.services.system_model import (
    DiscreteMapSpec,
    Sampler,
    VectorFieldSpec,
    estimate_lip,
    estimate_osl,
    jacobian_at,
    sample_states,
)
from contraction_cert.utils import config
from contraction_cert.utils.errors import FixedPointError
from contraction_cert.utils.run_metrics import get_run_metrics

logger = logging.getLogger(__name__)


def euler_map(f: VectorFieldSpec, alpha: float) -> DiscreteMapSpec:
    """x ↦ x + αF(x), con Jacobiano I + α·DF(x)."""
    alpha = float(alpha)
    if not alpha > 0.0:
        raise ValueError("Euler step alpha must be > 0")
    eye = np.eye(f.dim)
    if f.parametric:
        return DiscreteMapSpec(
            evaluator=lambda x, th: x + alpha * f.evaluate(x, th),
            jacobian=lambda x, th: eye + alpha * jacobian_at(f, x, th),
            domain=f.domain,
            parameter_domain=f.parameter_domain,
            name=f"euler({f.name})",
        )
    return DiscreteMapSpec(
        evaluator=lambda x: x + alpha * f.evaluate(x),
        jacobian=lambda x: eye + alpha * jacobian_at(f, x),
        domain=f.domain,
        name=f"euler({f.name})",
    )


@dataclass
class StepSearchResult:
    """Paso de Euler contractivo; la búsqueda es heurística (grilla + refinamiento)."""

    alpha: float
    factor: float
    first_alpha: float
    first_factor: float
    samples: int
    heuristic: bool = True

    def to_json(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "factor": self.factor,
            "first_alpha": self.first_alpha,
            "first_factor": self.first_factor,
            "samples": self.samples,
            "heuristic": self.heuristic,
        }


def find_contracting_step(
    f: VectorFieldSpec,
    spec: NormSpec,
    alpha_max: Optional[float] = None,
    sampler: Optional[Sampler] = None,
) -> Optional[StepSearchResult]:
    """
    Minimiza sobre α ∈ (0, alpha_max] el Lipschitz muestreado del mapa de Euler.

    Grilla logarítmica de 64 puntos sobre 4 décadas y refinamiento acotado
    alrededor del mejor punto. None si osL muestreado ≥ 0 o si ningún α de la
    grilla contrae. Sin alpha_max se usa 2/Lip muestreado.
    """
    osl = estimate_osl(f, spec, sampler).value
    if osl >= 0.0:
        logger.info(f"No contracting Euler step: sampled osL = {osl:.6g} >= 0")
        return None
    if alpha_max is None:
        lip = estimate_lip(f, spec, sampler).value
        alpha_max = 2.0 / lip if lip > 0.0 else 1.0
    alpha_max = float(alpha_max)
    if not alpha_max > 0.0:
        raise ValueError("alpha_max must be > 0")

    X, T = sample_states(f, sampler)
    jacobians = [jacobian_at(f, x, None if T is None else T[i]) for i, x in enumerate(X)]
    eye = np.eye(f.dim)

    def _factor(alpha: float) -> float:
        return max(matrix_norm(eye + alpha * J, spec) for J in jacobians)

    grid = alpha_max * np.logspace(-config.STEP_GRID_DECADES, 0.0, config.STEP_GRID_POINTS)
    factors = np.array([_factor(a) for a in grid])
    contracting = np.flatnonzero(factors < 1.0)
    if contracting.size == 0:
        logger.info("No contracting Euler step found on the step grid")
        return None
    first = int(contracting[0])
    best = int(np.argmin(factors))

    lo = grid[best - 1] if best > 0 else 0.0
    hi = grid[best + 1] if best + 1 < grid.size else grid[best]
    alpha, factor = float(grid[best]), float(factors[best])
    if hi > lo:
        res = minimize_scalar(_factor, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * alpha_max})
        if res.success and float(res.fun) < factor and float(res.x) > 0.0:
            alpha, factor = float(res.x), float(res.fun)

    return StepSearchResult(
        alpha=alpha,
        factor=factor,
        first_alpha=float(grid[first]),
        first_factor=float(factors[first]),
        samples=len(jacobians),
    )


@dataclass
class FixedPointResult:
    """
    Resultado de una iteración de Banach.

    aposteriori_bound: ‖x_star − x*‖ ≤ ρ/(1−ρ)·‖x_k − x_{k−1}‖
    apriori_bound:     ρᵏ‖x₁ − x₀‖/(1−ρ)
    """

    x_star: np.ndarray
    iterations: int
    factor_measured: float
    apriori_bound: float
    aposteriori_bound: float
    converged: bool
    diverged: bool = False
    factor_certified: Optional[float] = None
    distances: List[float] = field(default_factory=list)
    aposteriori_bounds: List[float] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {
            "x_star": self.x_star.tolist(),
            "iterations": self.iterations,
            "factor_measured": self.factor_measured,
            "factor_certified": self.factor_certified,
            "apriori_bound": self.apriori_bound,
            "aposteriori_bound": self.aposteriori_bound,
            "converged": self.converged,
            "diverged": self.diverged,
            "distances": list(self.distances),
        }

    def require_converged(self) -> "FixedPointResult":
        if not self.converged:
            raise FixedPointError(
                f"fixed-point iteration did not converge after {self.iterations} iterations "
                f"(last step {self.distances[-1] if self.distances else float('nan'):.3e})"
            )
        return self


def _clamp_ratio(rho: float) -> float:
    lo, hi = config.RATIO_CLAMP
    return float(min(max(rho, lo), hi))


def _measured_ratio(ratios: List[float]) -> Optional[float]:
    # ventana de arranque más la cola reciente (se solapan mientras k ≤ 20)
    if not ratios:
        return None
    w = config.BANACH_WINDOW
    return max(ratios[:w] + ratios[-w:])


def banach_iterate(
    mapping: DiscreteMapSpec,
    x0,
    tol: float,
    max_iter: int,
    spec: Optional[NormSpec] = None,
    factor: Optional[float] = None,
    theta=None,
) -> FixedPointResult:
    """
    Itera x_{k+1} = F(x_k) hasta ‖x_{k+1} − x_k‖ ≤ tol·(1 − ρ̂)/ρ̂.

    ρ̂ es el máximo de los cocientes de paso de la ventana de arranque (los
    primeros 10) junto con los 10 más recientes, o `factor` si se entrega uno
    certificado; se acota a [1e-6, 1 − 1e-9] para la aritmética de cotas. Si los
    últimos 10 cocientes llegan a 1 se reporta divergencia.
    """
    tol = float(tol)
    if not tol > 0.0:
        raise ValueError("tol must be > 0")
    spec = spec or NormSpec.l2()
    metrics = get_run_metrics()
    x = np.asarray(x0, dtype=float).reshape(-1).copy()

    distances: List[float] = []
    bounds: List[float] = []
    ratios: List[float] = []
    converged = diverged = False
    rho_used = _clamp_ratio(factor) if factor is not None else config.RATIO_CLAMP[1]

    for _k in range(int(max_iter)):
        x_next = mapping.evaluate(x, theta)
        metrics.increment_counter("fixed_point_iterations")
        if not np.all(np.isfinite(x_next)):
            diverged = True
            logger.warning(f"{mapping.name}: iterate became non-finite after {len(distances)} steps")
            break
        d = vector_norm(x_next - x, spec)
        if distances and distances[-1] > 0.0:
            ratios.append(d / distances[-1])
        distances.append(d)
        x = x_next

        measured = _measured_ratio(ratios)
        recent = max(ratios[-config.BANACH_WINDOW :]) if ratios else None
        if factor is None and measured is not None:
            rho_used = _clamp_ratio(measured)
        bounds.append(rho_used * d / (1.0 - rho_used))

        # paso al nivel del redondeo: no hay más que ganar
        roundoff = 8.0 * np.finfo(float).eps * (1.0 + vector_norm(x, spec))
        if d <= roundoff or d <= tol * (1.0 - rho_used) / rho_used:
            converged = True
            break
        if factor is None and recent is not None and len(ratios) >= config.BANACH_WINDOW and recent >= 1.0:
            diverged = True
            logger.warning(f"{mapping.name}: measured step ratio {recent:.4g} >= 1, iteration diverges")
            break

    measured = _measured_ratio(ratios)
    factor_measured = float(measured) if measured is not None else 0.0
    if not converged and not diverged:
        logger.warning(f"{mapping.name}: max_iter={max_iter} reached without meeting tol={tol:g}")
        metrics.record_error("fixed_point", f"max_iter reached ({max_iter})", mapping.name)

    k = len(distances)
    d0 = distances[0] if distances else 0.0
    return FixedPointResult(
        x_star=x,
        iterations=k,
        factor_measured=factor_measured,
        apriori_bound=float(rho_used**k * d0 / (1.0 - rho_used)),
        aposteriori_bound=float(bounds[-1]) if bounds else 0.0,
        converged=converged,
        diverged=diverged,
        factor_certified=factor,
        distances=distances,
        aposteriori_bounds=bounds,
    )
