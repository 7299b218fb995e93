"""
Chequeos puntuales y por regiones: condición riemanniana (solo verificación),
barrido de contractividad local con búsqueda de bola y clasificación débil.

Todo lo que sale de aquí es evidencia muestreada salvo el chequeo
riemanniano, que es exacto en el punto evaluado.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from contraction_cert.services.norms import NormSpec, log_norm, sym_eig_extremes, vector_norm
from contraction_cert.services.simulate import integrate
from contraction_cert.services.system_model import (
    SAMPLED_LABEL,
    Box,
    SampledBound,
    Sampler,
    SamplerKind,
    VectorFieldSpec,
    default_sampler,
    estimate_osl,
    jacobian_at,
)
from contraction_cert.utils import config
from contraction_cert.utils.errors import DimensionError, IntegrationBlowUp, WeightError
from contraction_cert.utils.parallel import map_items, map_points

logger = logging.getLogger(__name__)

MatrixOrFn = Union[np.ndarray, Callable[[np.ndarray], Any]]


# =========================
# Métrica riemanniana
# =========================

def _at(M: MatrixOrFn, x: np.ndarray, n: int, what: str) -> np.ndarray:
    value = M(x) if callable(M) else M
    value = np.atleast_2d(np.asarray(value, dtype=float))
    if value.shape != (n, n):
        raise DimensionError(f"{what} has shape {value.shape}, expected {(n, n)}")
    return value


def _require_spd(M: np.ndarray) -> None:
    scale = 1.0 + float(np.abs(M).max())
    if float(np.abs(M - M.T).max()) > config.PSD_REL_TOL * scale:
        raise WeightError("metric M(x) is not symmetric")
    lo, hi = sym_eig_extremes(M)
    if lo <= config.PSD_REL_TOL * (1.0 + abs(hi)):
        raise WeightError(f"metric M(x) is not positive definite (min eigenvalue {lo:.3e})")


def riemannian_pointwise_check(
    f: VectorFieldSpec,
    M: MatrixOrFn,
    Mdot: Optional[MatrixOrFn],
    x,
    c: float,
    theta=None,
) -> float:
    """
    λmax(M·DF + DFᵀ·M + Ṁ + 2cM) en x; ≤ 0 significa que la condición se cumple.

    Ṁ es la derivada de Lie de M a lo largo de F y la entrega quien llama.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = f.dim
    Mx = _at(M, x, n, "M(x)")
    _require_spd(Mx)
    Md = np.zeros((n, n)) if Mdot is None else _at(Mdot, x, n, "Mdot(x)")
    J = jacobian_at(f, x, theta)
    S = Mx @ J + J.T @ Mx + Md + 2.0 * float(c) * Mx
    return sym_eig_extremes(S)[1]


def riemannian_theta_check(
    f: VectorFieldSpec,
    Theta: MatrixOrFn,
    Theta_dot: Optional[MatrixOrFn],
    x,
    c: float,
    theta=None,
) -> float:
    """μ₂(Θ·DF·Θ⁻¹ + Θ̇·Θ⁻¹) + c, con M = ΘᵀΘ; ≤ 0 significa que la condición se cumple."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = f.dim
    Th = _at(Theta, x, n, "Theta(x)")
    Td = np.zeros((n, n)) if Theta_dot is None else _at(Theta_dot, x, n, "Theta_dot(x)")
    try:
        Th_inv = np.linalg.inv(Th)
    except np.linalg.LinAlgError as e:
        raise WeightError("Theta(x) is singular") from e
    J = jacobian_at(f, x, theta)
    return log_norm(Th @ J @ Th_inv + Td @ Th_inv, NormSpec.l2()) + float(c)


# =========================
# Barrido local
# =========================

@dataclass
class ContractionBall:
    """Bola B(center, radius) con μ(DF) ≤ −rate en sus puntos muestreados y ‖F(center)‖ ≤ rate·radius·(1 − safety)."""

    center: np.ndarray
    radius: float
    rate: float
    residual: float
    samples: int
    certified: bool = False

    def to_json(self) -> Dict[str, Any]:
        return {
            "center": self.center.tolist(),
            "radius": self.radius,
            "rate": self.rate,
            "residual": self.residual,
            "samples": self.samples,
            "certified": self.certified,
            "label": SAMPLED_LABEL,
        }


@dataclass
class LocalScanResult:
    points: np.ndarray
    mu: np.ndarray
    norm: NormSpec
    domain: Box
    ball: Optional[ContractionBall] = None
    balls: List[ContractionBall] = field(default_factory=list)

    @property
    def negative_fraction(self) -> float:
        return float(np.mean(self.mu < 0.0)) if self.mu.size else 0.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "norm": self.norm.to_json(),
            "domain": self.domain.to_json(),
            "samples": int(self.mu.size),
            "mu_max": float(self.mu.max()),
            "mu_min": float(self.mu.min()),
            "negative_fraction": self.negative_fraction,
            "ball": self.ball.to_json() if self.ball is not None else None,
        }


def _grid_spacing(sampler: Sampler, box: Box, count: int) -> float:
    widths = box.widths
    if sampler.kind == SamplerKind.UNIFORM_GRID and sampler.count > 1:
        return float(widths.min()) / (sampler.count - 1)
    per_axis = max(2.0, count ** (1.0 / box.dim))
    return float(widths.min()) / (per_axis - 1.0)


def _axis_points(center: np.ndarray, radius: float, spec: NormSpec) -> np.ndarray:
    n = center.shape[0]
    pts = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        step = radius / vector_norm(e, spec)
        pts.append(center + step * e)
        pts.append(center - step * e)
    return np.array(pts)


def _polish_center(f: VectorFieldSpec, x: np.ndarray) -> np.ndarray:
    """Acerca el centro a un cero de F dentro de la caja (mínimos cuadrados acotados)."""
    box = f.domain
    try:
        res = least_squares(
            lambda z: f.evaluate(z),
            x,
            jac=lambda z: jacobian_at(f, z),
            bounds=(box.lo, box.hi),
        )
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.debug(f"Center polishing failed at {np.round(x, 6).tolist()}: {e}")
        return x
    return np.asarray(res.x, dtype=float)


def _ball_search(
    f: VectorFieldSpec,
    spec: NormSpec,
    points: np.ndarray,
    mu: np.ndarray,
    center: np.ndarray,
    r0: float,
) -> Optional[ContractionBall]:
    box = f.domain
    residual = vector_norm(f.evaluate(center), spec)
    mu_center = log_norm(jacobian_at(f, center), spec)
    if mu_center >= 0.0 or r0 <= 0.0:
        return None

    best: Optional[ContractionBall] = None
    r = r0
    while True:
        extra = _axis_points(center, r, spec)
        if not all(box.contains(p, tol=1e-12) for p in extra):
            break
        inside = np.array([vector_norm(p - center, spec) <= r for p in points], dtype=bool)
        mu_extra = [log_norm(jacobian_at(f, p), spec) for p in extra]
        worst = max([mu_center, *mu_extra, *mu[inside].tolist()])
        rate = -worst
        if rate <= 0.0 or residual > rate * r * (1.0 - config.BALL_SAFETY):
            break
        best = ContractionBall(
            center=center.copy(),
            radius=r,
            rate=rate,
            residual=residual,
            samples=int(inside.sum()) + len(extra) + 1,
        )
        r *= config.BALL_GROWTH
    return best


def local_contraction_scan(
    f: VectorFieldSpec,
    spec: NormSpec,
    sampler: Optional[Sampler] = None,
) -> LocalScanResult:
    """
    Campo x ↦ μ(DF(x)) sobre la muestra y búsqueda de una bola de contracción.

    Centros candidatos: los puntos con μ más negativo y los de menor
    ‖F‖/|μ|, acercados a un cero de F. El radio parte del espaciado de la
    grilla y crece ×1.5 mientras la condición muestreada se cumpla y la
    bola quede dentro de la caja. Se reporta la bola de mayor radio.
    """
    n = f.dim
    if n > config.SCAN_MAX_DIM:
        raise DimensionError(
            f"{f.name}: state dimension {n} is too large for a scan (max {config.SCAN_MAX_DIM}); use sampled estimates"
        )
    sampler = sampler or default_sampler(n)
    points = sampler.points(f.domain)
    mu = map_points(lambda x: log_norm(jacobian_at(f, x), spec), points)

    negative = np.flatnonzero(mu < 0.0)
    result = LocalScanResult(points=points, mu=mu, norm=spec, domain=f.domain)
    if negative.size == 0:
        logger.info(f"{f.name}: no sampled point with negative log norm")
        return result

    k = config.BALL_CANDIDATES
    by_mu = negative[np.argsort(mu[negative], kind="stable")[:k]]
    residuals = np.array([vector_norm(f.evaluate(points[i]), spec) for i in negative])
    by_ratio = negative[np.argsort(residuals / np.abs(mu[negative]), kind="stable")[:k]]
    candidates = list(dict.fromkeys([int(i) for i in by_ratio] + [int(i) for i in by_mu]))

    r0 = _grid_spacing(sampler, f.domain, points.shape[0])

    def _try(i: int) -> Optional[ContractionBall]:
        center = _polish_center(f, points[i])
        return _ball_search(f, spec, points, mu, center, r0)

    balls = [b for b in map_items(_try, candidates) if b is not None]
    unique: List[ContractionBall] = []
    for b in balls:
        if not any(np.allclose(b.center, u.center, atol=1e-8) and b.radius == u.radius for u in unique):
            unique.append(b)
    result.balls = unique
    if unique:
        result.ball = max(unique, key=lambda b: (b.radius, b.rate))
        logger.info(
            f"{f.name}: contraction ball found at {np.round(result.ball.center, 6).tolist()} "
            f"radius={result.ball.radius:.4g} rate={result.ball.rate:.4g}"
        )
    else:
        logger.info(f"{f.name}: no contraction ball found")
    return result


# =========================
# Contractividad débil
# =========================

class WeakClass(str, Enum):
    STRICTLY_NEGATIVE = "strictly_negative"
    WEAKLY_NONPOSITIVE = "weakly_nonpositive"
    INDEFINITE = "indefinite"


@dataclass
class WeakContractionResult:
    classification: WeakClass
    sup: SampledBound
    rate: Optional[float] = None
    probe: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "classification": self.classification.value,
            "rate": self.rate,
            "sup": self.sup.to_json(),
            "probe": self.probe,
        }


def classify_log_norm_sup(value: float, band: float = config.WEAK_BAND) -> Tuple[WeakClass, Optional[float]]:
    if value < -band:
        return WeakClass.STRICTLY_NEGATIVE, -value
    if value <= band:
        return WeakClass.WEAKLY_NONPOSITIVE, None
    return WeakClass.INDEFINITE, None


def boundedness_probe(
    f: VectorFieldSpec,
    spec: NormSpec,
    count: int = 4,
    t_span: Tuple[float, float] = (0.0, 20.0),
    dt: float = 1e-2,
    seed: int = config.DEFAULT_SEED,
    growth_limit: float = 1.5,
) -> Dict[str, Any]:
    """
    Integra unas pocas trayectorias desde puntos aleatorios de la caja y compara
    el máximo de ‖x‖ en el último cuarto del horizonte con el del primero.
    Evidencia empírica de la dicotomía, no certifica nada.
    """
    rng = np.random.default_rng(seed)
    box = f.domain
    starts = box.lo + rng.random((count, f.dim)) * box.widths

    def _growth(x0: np.ndarray) -> float:
        try:
            traj = integrate(f, x0, t_span, dt)
        except IntegrationBlowUp:
            return float("inf")
        norms = np.array([vector_norm(s, spec) for s in traj.states])
        quarter = max(1, norms.size // 4)
        head = float(norms[:quarter].max())
        tail = float(norms[-quarter:].max())
        return tail / head if head > 0.0 else (0.0 if tail == 0.0 else float("inf"))

    growth = map_items(_growth, list(starts))
    worst = max(growth)
    bounded = bool(np.isfinite(worst) and worst <= growth_limit)
    if not bounded:
        logger.warning(f"{f.name}: boundedness probe saw growth ratio {worst:.4g} (empirical, non-certifying)")
    return {
        "bounded": bounded,
        "max_growth_ratio": worst if np.isfinite(worst) else None,
        "trajectories": count,
        "t_span": [float(t_span[0]), float(t_span[1])],
        "certified": False,
    }


def weak_contraction_check(
    f: VectorFieldSpec,
    spec: NormSpec,
    sampler: Optional[Sampler] = None,
    probe: bool = True,
    probe_count: int = 4,
    probe_span: Tuple[float, float] = (0.0, 20.0),
) -> WeakContractionResult:
    """Clasifica el sup muestreado de μ(DF) con la banda ±1e-6."""
    sup = estimate_osl(f, spec, sampler)
    classification, rate = classify_log_norm_sup(sup.value)
    result = WeakContractionResult(classification=classification, sup=sup, rate=rate)
    if probe:
        result.probe = boundedness_probe(f, spec, count=probe_count, t_span=probe_span)
    return result
