"""
Aplicaciones de punta a punta sobre el integrador: controlador de gradiente
para optimización variante en el tiempo y red competitiva positiva para
reconstrucción dispersa.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from contraction_cert.services.models import competitive_field, validate_dictionary
from contraction_cert.services.norms import NormSpec, vector_norm
from contraction_cert.services.simulate import Signal, Trajectory, integrate, log_slope_rate, solve_frozen_equilibria
from contraction_cert.services.system_model import Box, Sampler, VectorFieldSpec, estimate_lip, estimate_osl
from contraction_cert.utils import config
from contraction_cert.utils.errors import DimensionError, FixedPointError, InvalidModelError

logger = logging.getLogger(__name__)

Gradient = Callable[[np.ndarray], Any]


# =========================
# Controlador de gradiente
# =========================

@dataclass
class GradientControllerReport:
    """
    limsup_error: máximo de ‖u − u*(w)‖₂ en el último 25% del horizonte.
    bound: (ℓ_w/ν²)·sup‖ẇ‖₂ sobre la misma ventana.
    """

    limsup_error: float
    bound: float
    passes: bool
    ell_w: float
    nu: float
    step: float
    trajectory: Optional[Trajectory] = None
    optimum: Optional[np.ndarray] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "limsup_error": self.limsup_error,
            "bound": self.bound,
            "passes": self.passes,
            "ell_w": self.ell_w,
            "nu": self.nu,
            "step": self.step,
        }


def _gradient_lip(grad: Gradient, box: Box) -> float:
    f = VectorFieldSpec(evaluator=lambda x: grad(x), domain=box, name="phi_grad")
    return estimate_lip(f, NormSpec.l2(), Sampler.latin_hypercube(200)).value


def gradient_controller_demo(
    phi_grad: Gradient,
    psi_grad: Gradient,
    Yu,
    Yw,
    w: Signal,
    u0,
    t_span: Tuple[float, float],
    nu: float,
    psi_lip: float,
    phi_lip: Optional[float] = None,
    dt: float = 1e-2,
    abs_tol: float = 1e-6,
    domain: Optional[Box] = None,
) -> GradientControllerReport:
    """
    Integra u̇ = −∇φ(u) − Yuᵀ∇ψ(Yu·u + Yw·w(t)) y compara la cola del error
    de seguimiento contra (ℓ_w/ν²)·limsup‖ẇ‖, con ℓ_w = ‖Yuᵀ‖₂·Lip(∇ψ)·‖Yw‖₂.

    u*(w(t)) se resuelve por iteración de Banach al paso 1/(L_φ + ‖Yu‖²·L_ψ),
    con factor certificado 1 − ν·paso.
    """
    nu = float(nu)
    if not nu > 0.0:
        raise InvalidModelError("strong convexity parameter nu must be > 0")
    if float(psi_lip) < 0.0:
        raise InvalidModelError("Lipschitz constant of grad psi must be >= 0")
    Yu = np.atleast_2d(np.asarray(Yu, dtype=float))
    Yw = np.atleast_2d(np.asarray(Yw, dtype=float))
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    m = u0.shape[0]
    if Yu.shape[1] != m or Yw.shape[0] != Yu.shape[0]:
        raise DimensionError(f"Yu {Yu.shape} and Yw {Yw.shape} do not match a control of dimension {m}")
    q = Yw.shape[1]
    if w.value(float(t_span[0])).shape[0] != q:
        raise DimensionError(f"disturbance signal must have dimension {q}")

    dom = domain or Box.symmetric(max(1.0, 2.0 * float(np.abs(u0).max())), m)
    l2 = NormSpec.l2()
    # φ ν-fuertemente convexa ⇔ −∇φ contrae con tasa ν
    osl = estimate_osl(VectorFieldSpec(evaluator=lambda x: -np.asarray(phi_grad(x), dtype=float), domain=dom), l2).value
    if osl > -nu + config.WEAK_BAND * (1.0 + nu):
        raise InvalidModelError(f"phi is not {nu:g}-strongly convex on the sampled domain (sampled osL {osl:.6g})")

    L_phi = float(phi_lip) if phi_lip is not None else _gradient_lip(phi_grad, dom)
    yu_norm = float(np.linalg.norm(Yu, 2))
    yw_norm = float(np.linalg.norm(Yw, 2))
    step = 1.0 / (L_phi + yu_norm**2 * float(psi_lip))
    ell_w = float(np.linalg.norm(Yu.T, 2)) * float(psi_lip) * yw_norm

    w_samples = np.array([w.value(t) for t in np.linspace(t_span[0], t_span[1], 101)])
    w_box = Box(w_samples.min(axis=0) - 1.0, w_samples.max(axis=0) + 1.0)
    field_ = VectorFieldSpec(
        evaluator=lambda u, wv: -np.asarray(phi_grad(u), dtype=float)
        - Yu.T @ np.asarray(psi_grad(Yu @ u + Yw @ wv), dtype=float),
        domain=dom,
        parameter_domain=w_box,
        name="gradient_controller",
    )

    traj = integrate(field_, u0, t_span, dt, w)
    times = traj.times
    idx = np.unique(np.concatenate([np.arange(0, times.shape[0], config.FIXED_POINT_SOLVE_EVERY), [times.shape[0] - 1]]))
    optimum = solve_frozen_equilibria(
        field_,
        l2,
        [w.value(times[i]) for i in idx],
        u0,
        alpha=step,
        factor=max(0.0, 1.0 - nu * step),
    )
    u_star = np.column_stack([np.interp(times, times[idx], optimum[:, j]) for j in range(m)])

    err = np.linalg.norm(traj.states - u_star, axis=1)
    tail = times >= times[0] + 0.75 * (times[-1] - times[0])
    drift = max(vector_norm(w.derivative(t), l2) for t in times[tail])
    limsup_error = float(err[tail].max())
    bound = ell_w / nu**2 * drift
    passes = limsup_error <= bound * (1.0 + 1e-2) + abs_tol
    logger.info(f"Gradient controller: tail error {limsup_error:.4g} vs bound {bound:.4g} (passes={passes})")
    return GradientControllerReport(
        limsup_error=limsup_error,
        bound=bound,
        passes=passes,
        ell_w=ell_w,
        nu=nu,
        step=step,
        trajectory=traj,
        optimum=u_star,
    )


# =========================
# Reconstrucción dispersa
# =========================

def sparse_objective(Phi, u, lam: float, x) -> float:
    """½‖u − Φx‖₂² + λ‖x‖₁."""
    r = np.asarray(u, dtype=float) - np.asarray(Phi, dtype=float) @ np.asarray(x, dtype=float)
    return float(0.5 * r @ r + float(lam) * np.abs(x).sum())


def projected_ista(
    Phi,
    u,
    lam: float,
    tol: float = 1e-13,
    max_iter: int = 200_000,
) -> np.ndarray:
    """
    Gradiente proximal proyectado para min ½‖u − Φx‖² + λ‖x‖₁ con x ≥ 0,
    paso 1/‖ΦᵀΦ‖₂. Independiente de la red: no comparte código con el campo.
    """
    Phi = np.asarray(Phi, dtype=float)
    u = np.asarray(u, dtype=float)
    G = Phi.T @ Phi
    b = Phi.T @ u
    s = 1.0 / float(np.linalg.norm(G, 2))
    x = np.zeros(Phi.shape[1])
    for _k in range(int(max_iter)):
        x_next = np.maximum(x - s * (G @ x - b + lam), 0.0)
        if float(np.abs(x_next - x).max()) <= tol:
            return x_next
        x = x_next
    raise FixedPointError(f"proximal-gradient oracle did not converge after {max_iter} iterations")


@dataclass
class SparseReconstructionReport:
    equilibrium: np.ndarray
    objective: float
    oracle_objective: float
    objective_gap: float
    gap_ok: bool
    nonneg_ok: bool
    min_state: float
    empirical_rate: Optional[float]
    certified: bool = False
    trajectory: Optional[Trajectory] = None
    notes: List[str] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {
            "equilibrium": self.equilibrium.tolist(),
            "objective": self.objective,
            "oracle_objective": self.oracle_objective,
            "objective_gap": self.objective_gap,
            "gap_ok": self.gap_ok,
            "nonneg_ok": self.nonneg_ok,
            "min_state": self.min_state,
            "empirical_rate": self.empirical_rate,
            "certified": self.certified,
            "notes": list(self.notes),
        }


def sparse_reconstruction_demo(
    Phi,
    u,
    lam: float,
    x0,
    t_span: Tuple[float, float] = (0.0, 200.0),
    dt: float = 1e-2,
) -> SparseReconstructionReport:
    """
    Integra la red competitiva desde x0 ≥ 0, verifica que el ortante no negativo
    es invariante y compara el objetivo en el equilibrio contra el oráculo de
    gradiente proximal. La tasa reportada es empírica: la contractividad de esta
    red es solo local.
    """
    Phi = validate_dictionary(Phi)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != Phi.shape[1]:
        raise DimensionError(f"x0 has dimension {x0.shape[0]}, dictionary has {Phi.shape[1]} atoms")
    if np.any(x0 < 0.0):
        raise InvalidModelError("initial state must be entrywise nonnegative")

    f = competitive_field(Phi, u, lam)
    traj = integrate(f, x0, t_span, dt)
    x_eq = traj.final.copy()
    min_state = float(traj.states.min())
    nonneg_ok = min_state >= -config.DISTANCE_FLOOR

    oracle = projected_ista(Phi, u, lam)
    objective = sparse_objective(Phi, u, lam, x_eq)
    oracle_objective = sparse_objective(Phi, u, lam, oracle)
    gap = objective - oracle_objective
    gap_ok = abs(gap) <= 1e-6 * (1.0 + abs(oracle_objective))

    stride = max(1, traj.times.shape[0] // 2000)
    sub = slice(None, None, stride)
    residuals = np.array([float(np.linalg.norm(f.evaluate(x))) for x in traj.states[sub]])
    rate = log_slope_rate(traj.times[sub], residuals)

    notes = ["empirical rate only: contraction of this network is local"]
    if not gap_ok:
        logger.warning(f"Sparse reconstruction objective gap {gap:.3e} exceeds tolerance")
    return SparseReconstructionReport(
        equilibrium=x_eq,
        objective=objective,
        oracle_objective=oracle_objective,
        objective_gap=gap,
        gap_ok=gap_ok,
        nonneg_ok=nonneg_ok,
        min_state=min_state,
        empirical_rate=rate,
        trajectory=traj,
        notes=notes,
    )
