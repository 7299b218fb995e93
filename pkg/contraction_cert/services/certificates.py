"""
Certificados de contractividad.

Cada certificado trae su testigo (P, η o (P, λ)) y el margen de la desigualdad
que lo define; margen ≥ 0 (con la tolerancia PSD de norms) significa que la
desigualdad se cumple. La verificación de cada testigo recalcula la
desigualdad desde cero y no reutiliza el camino de búsqueda.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from contraction_cert.services.discretization import FixedPointResult, banach_iterate
from contraction_cert.services.models import FiringRateSpec, ImplicitNNSpec, LureSpec, implicit_nn_map
from contraction_cert.services.norms import (
    NormKind,
    NormSpec,
    as_square,
    is_nsd,
    log_norm,
    matrix_norm,
    spectral_summary,
    sym_eig_extremes,
)
from contraction_cert.utils import config
from contraction_cert.utils.errors import (
    DimensionError,
    NotHurwitzError,
    NotMetzlerError,
    NumericalFailure,
    UnsupportedNormError,
    WeightError,
)

logger = logging.getLogger(__name__)


class CertificateMethod(str, Enum):
    CLOSED_FORM = "ClosedForm"
    LYAPUNOV = "Lyapunov"
    PERRON = "Perron"
    LMI_VERIFY = "LMIVerify"
    LMI_SEARCH = "LMISearch"
    SAMPLED = "Sampled"


@dataclass
class ContractionCertificate:
    """
    Certificado continuo (rate = −osL) o discreto (factor = Lip < 1).

    witness admite las claves "P", "eta" y "lambda".
    """

    norm: NormSpec
    method: CertificateMethod
    margin: float
    rate: Optional[float] = None
    factor: Optional[float] = None
    witness: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if (self.rate is None) == (self.factor is None):
            raise ValueError("certificate needs exactly one of rate or factor")
        if self.factor is not None and not (0.0 <= self.factor < 1.0):
            raise ValueError(f"discrete contraction factor must lie in [0, 1), got {self.factor}")

    @property
    def certified(self) -> bool:
        return self.method != CertificateMethod.SAMPLED

    @property
    def contracting(self) -> bool:
        if self.rate is not None:
            return self.rate > 0.0
        return self.factor < 1.0

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "norm": self.norm.to_json(),
            "method": self.method.value,
            "margin": self.margin,
            "certified": self.certified,
            "witness": {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in self.witness.items()},
        }
        if self.rate is not None:
            data["rate"] = self.rate
        else:
            data["factor"] = self.factor
        if self.notes:
            data["notes"] = list(self.notes)
        return data


@dataclass(frozen=True)
class InequalityCheck:
    """Resultado de evaluar una desigualdad matricial: holds y su holgura."""

    holds: bool
    margin: float
    cross_check: Optional[float] = None
    agrees: bool = True

    def to_json(self) -> Dict[str, Any]:
        return {"holds": self.holds, "margin": self.margin, "cross_check": self.cross_check, "agrees": self.agrees}


# =========================
# Sistemas lineales
# =========================

def lti_l2_certificate(A, target_rate: float) -> ContractionCertificate:
    """
    Resuelve (A + rI)ᵀP + P(A + rI) = −I y verifica AᵀP + PA + 2rP ⪯ 0.

    En la frontera α(A) = −r la ecuación desplazada es singular; se usa
    AᵀP + PA = −I y se verifica con margen ≥ 0.
    """
    A = as_square(A)
    r = float(target_rate)
    if not r > 0.0:
        raise ValueError("target rate must be > 0")
    n = A.shape[0]
    alpha = spectral_summary(A).alpha
    tol = config.EIG_REL_TOL * (1.0 + abs(alpha) + r)
    if alpha > -r + tol:
        raise NotHurwitzError(f"A is not Hurwitz at rate {r:g}: alpha(A) = {alpha:.6g}", alpha=alpha)

    boundary = alpha >= -r - tol
    shifted = A if boundary else A + r * np.eye(n)
    try:
        P = scipy.linalg.solve_continuous_lyapunov(shifted.T, -np.eye(n))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"Lyapunov solve failed: {e}") from e
    if not np.all(np.isfinite(P)):
        raise NumericalFailure("Lyapunov solve is singular (non-finite solution)")
    P = 0.5 * (P + P.T)
    p_min, p_max = sym_eig_extremes(P)
    if p_min <= 0.0:
        raise NumericalFailure(f"Lyapunov solution is not positive definite (min eigenvalue {p_min:.3e})")

    residual = A.T @ P + P @ A + 2.0 * r * P
    margin = -sym_eig_extremes(residual)[1]
    if not is_nsd(residual):
        if boundary:
            raise NotHurwitzError(f"A is not Hurwitz at rate {r:g}: boundary case cannot be certified", alpha=alpha)
        raise NumericalFailure(f"Lyapunov witness failed verification (margin {margin:.3e})")

    logger.info(f"Lyapunov certificate found: rate={r:g}, margin={margin:.3e}, cond(P)={p_max / p_min:.3e}")
    notes = ["boundary: unshifted Lyapunov solve"] if boundary else []
    return ContractionCertificate(
        norm=NormSpec.weighted_l2(P),
        method=CertificateMethod.LYAPUNOV,
        margin=margin,
        rate=r,
        witness={"P": P},
        notes=notes,
    )


def _check_metzler(A: np.ndarray) -> None:
    off = A - np.diag(np.diag(A))
    if np.any(off < 0.0):
        raise NotMetzlerError("matrix is not Metzler (negative off-diagonal entry)")


def _metzler_weight_candidates(A: np.ndarray, alpha: float) -> List[Tuple[str, np.ndarray]]:
    n = A.shape[0]
    candidates: List[Tuple[str, np.ndarray]] = []

    # Vector de Perron de A + sI (no negativa)
    s = float(np.max(np.abs(np.diag(A)))) + 1.0
    w, V = np.linalg.eig(A + s * np.eye(n))
    v = np.real(V[:, int(np.argmax(w.real))])
    v = v if v.sum() >= 0 else -v
    if np.all(v > 0.0):
        candidates.append(("perron", v))
    candidates.append(("ones", np.ones(n)))

    # Resolvente (γI − A)⁻¹·1 con γ apenas mayor que α: positivo aun si A es reducible
    gamma = alpha + 1e-9 * (1.0 + abs(alpha))
    try:
        eta = np.linalg.solve(gamma * np.eye(n) - A, np.ones(n))
        if np.all(np.isfinite(eta)) and np.all(eta > 0.0):
            candidates.append(("resolvent", eta))
    except np.linalg.LinAlgError:
        logger.debug("Resolvent candidate skipped (singular shift)")
    return candidates


def metzler_linf_certificate(A) -> ContractionCertificate:
    """
    Peso η > 0 con μ_{∞,η}(A) = α(A) para A Metzler y Hurwitz.

    Prueba el vector de Perron, η = 1 y el resolvente; devuelve el primero
    cuyo μ_{∞,η} coincide con α(A) dentro de 1e-8.
    """
    A = as_square(A)
    _check_metzler(A)
    alpha = spectral_summary(A).alpha
    if alpha >= 0.0:
        raise NotHurwitzError(f"Metzler matrix is not Hurwitz: alpha(A) = {alpha:.6g}", alpha=alpha)

    best: Optional[Tuple[str, np.ndarray, float]] = None
    for source, eta in _metzler_weight_candidates(A, alpha):
        eta = eta / eta.max()
        mu = log_norm(A, NormSpec.weighted_linf(eta))
        if best is None or mu < best[2]:
            best = (source, eta, mu)
        if abs(mu - alpha) <= config.METZLER_OPT_TOL:
            best = (source, eta, mu)
            break
    else:
        logger.warning(f"No Metzler weight matched alpha within {config.METZLER_OPT_TOL:g}; using best candidate")

    source, eta, mu = best
    if mu >= 0.0:
        raise NumericalFailure("could not construct a contracting weight for a Hurwitz Metzler matrix")
    return ContractionCertificate(
        norm=NormSpec.weighted_linf(eta),
        method=CertificateMethod.PERRON,
        margin=-mu,
        rate=-mu,
        witness={"eta": eta, "alpha": alpha},
        notes=[f"weight: {source}"],
    )


def _as_weighted(spec: NormSpec, n: int) -> NormSpec:
    if spec.kind == NormKind.L2:
        return NormSpec.weighted_l2(np.eye(n))
    if spec.kind == NormKind.LINF:
        return NormSpec.weighted_linf(np.ones(n))
    if spec.kind in (NormKind.WEIGHTED_L2, NormKind.WEIGHTED_LINF):
        return spec
    raise UnsupportedNormError(f"affine equivalences are stated for weighted l2 / linf, got {spec.label}")


def affine_equivalence_check(A, spec: NormSpec, ell: float, mode: str = "osl") -> InequalityCheck:
    """
    Evalúa directamente las equivalencias afines y compara con la norma:

    - ℓ2,P  osL: AᵀP + PA ⪯ 2ℓP        Lip: AᵀPA ⪯ ℓ²P
    - ℓ∞,η  osL: aᵢᵢ + Σ_{j≠i}|aᵢⱼ|ηⱼ/ηᵢ ≤ ℓ   Lip: |A|η ≤ ℓη
    """
    A = as_square(A)
    n = A.shape[0]
    spec = _as_weighted(spec, n)
    spec.check_dim(n)
    ell = float(ell)
    mode = (mode or "").strip().lower()
    if mode not in ("osl", "lip"):
        raise ValueError(f"mode must be 'osl' or 'lip', got '{mode}'")

    if spec.kind == NormKind.WEIGHTED_L2:
        P = spec.P
        if mode == "osl":
            lam = scipy.linalg.eigh(A.T @ P + P @ A, P, eigvals_only=True)[-1]
            margin = ell - 0.5 * float(lam)
        else:
            lam = scipy.linalg.eigh(A.T @ P @ A, P, eigvals_only=True)[-1]
            margin = ell - float(np.sqrt(max(float(lam), 0.0)))
    else:
        eta = spec.eta
        if mode == "osl":
            diag = np.diag(A)
            off = (np.abs(A) - np.diag(np.abs(diag))) @ eta
            margin = ell - float(np.max(diag + off / eta))
        else:
            margin = ell - float(np.max((np.abs(A) @ eta) / eta))

    tol = config.PSD_REL_TOL * (1.0 + abs(ell))
    holds = margin >= -tol
    reference = log_norm(A, spec) if mode == "osl" else matrix_norm(A, spec)
    agrees = holds == (reference <= ell + tol)
    if not agrees:
        logger.warning(f"Affine {mode} check disagrees with {spec.label} norm: margin={margin:.3e}, norm={reference:.6g}, ell={ell:.6g}")
    return InequalityCheck(holds=holds, margin=margin, cross_check=reference, agrees=agrees)


# =========================
# Lur'e
# =========================

def _validate_spd(P, n: int) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape != (n, n):
        raise DimensionError(f"P has shape {P.shape}, expected {(n, n)}")
    if float(np.max(np.abs(P - P.T))) > config.PSD_REL_TOL * (1.0 + float(np.max(np.abs(P)))):
        raise WeightError("P is not symmetric")
    P = 0.5 * (P + P.T)
    if sym_eig_extremes(P)[0] <= 0.0:
        raise WeightError("P is not positive definite")
    return P


def lure_lmi_block(s: LureSpec, P, lam: float) -> np.ndarray:
    """Matriz por bloques [[AᵀP + PA + 2ηP, PB + λCᵀ], [BᵀP + λC, −2λρI]]."""
    P = np.asarray(P, dtype=float)
    top_left = s.A.T @ P + P @ s.A + 2.0 * s.eta_rate * P
    top_right = P @ s.B + lam * s.C_out.T
    bottom_right = -2.0 * lam * s.rho * np.eye(s.m)
    return np.block([[top_left, top_right], [top_right.T, bottom_right]])


def lure_lmi_verify(s: LureSpec, P, lam: float) -> InequalityCheck:
    """LMI por bloques ⪯ 0 dentro de la tolerancia PSD."""
    P = _validate_spd(P, s.n)
    lam = float(lam)
    if lam < 0.0:
        raise ValueError("lambda must be >= 0")
    block = lure_lmi_block(s, P, lam)
    margin = -sym_eig_extremes(block)[1]
    return InequalityCheck(holds=is_nsd(block), margin=margin)


def lure_lambda_grid() -> np.ndarray:
    lo, hi = config.LURE_LAMBDA_RANGE
    return np.concatenate([[0.0], np.logspace(lo, hi, config.LURE_LAMBDA_GRID)])


def lure_lmi_search(s: LureSpec) -> Optional[Tuple[np.ndarray, float]]:
    """
    Búsqueda heurística de (P, λ): P de la ecuación de Lyapunov a la tasa
    objetivo y λ en {0} ∪ logspace(−3, 3, 25). None si nada verifica; eso no
    prueba infactibilidad.
    """
    try:
        P = lti_l2_certificate(s.A, s.eta_rate).witness["P"]
    except (NotHurwitzError, NumericalFailure) as e:
        logger.info(f"Lur'e search skipped: {e}")
        return None
    for lam in lure_lambda_grid():
        if lure_lmi_verify(s, P, lam).holds:
            logger.info(f"Lur'e LMI verified at lambda={lam:.4g}")
            return P, float(lam)
    logger.info("Lur'e search exhausted the lambda grid: no certificate found")
    return None


def lure_certificate(s: LureSpec) -> Optional[ContractionCertificate]:
    found = lure_lmi_search(s)
    if found is None:
        return None
    P, lam = found
    check = lure_lmi_verify(s, P, lam)
    return ContractionCertificate(
        norm=NormSpec.weighted_l2(P),
        method=CertificateMethod.LMI_SEARCH,
        margin=check.margin,
        rate=s.eta_rate,
        witness={"P": P, "lambda": lam, "rho": s.rho},
    )


# =========================
# Modelos no lineales con forma cerrada
# =========================

def firing_rate_osl(s: FiringRateSpec) -> ContractionCertificate:
    """osL∞ = max{μ∞(−C + d1·A), μ∞(−C + d2·A)}."""
    linf = NormSpec.linf()
    osl = max(log_norm(-s.C + s.d1 * s.A, linf), log_norm(-s.C + s.d2 * s.A, linf))
    return ContractionCertificate(
        norm=linf,
        method=CertificateMethod.CLOSED_FORM,
        margin=-osl,
        rate=-osl,
        witness={"d1": s.d1, "d2": s.d2},
    )


def gradient_flow_certificate(Q=None, reg: Optional[float] = None) -> ContractionCertificate:
    """
    −∇f es contractivo en ℓ2 con tasa ν si f es ν-fuertemente convexa.

    Q: hessiano de una cuadrática (ν = λmin(Q)); reg: peso ℓ2 de una pérdida
    logística regularizada (ν = reg).
    """
    if (Q is None) == (reg is None):
        raise ValueError("provide exactly one of Q or reg")
    if Q is not None:
        nu = sym_eig_extremes(Q)[0]
        note = "quadratic: rate = lambda_min(Q)"
    else:
        nu = float(reg)
        note = "regularized logistic loss: rate = regularization weight"
    return ContractionCertificate(
        norm=NormSpec.l2(),
        method=CertificateMethod.CLOSED_FORM,
        margin=nu,
        rate=nu,
        notes=[note],
    )


@dataclass
class ImplicitNNReport:
    well_posed: bool
    mu_inf: float
    ct_rate: Optional[float] = None
    alpha_star: Optional[float] = None
    dt_factor: Optional[float] = None
    lip_u_to_x: Optional[float] = None
    rel_robustness_coeff: Optional[float] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "well_posed": self.well_posed,
            "mu_inf": self.mu_inf,
            "ct_rate": self.ct_rate,
            "alpha_star": self.alpha_star,
            "dt_factor": self.dt_factor,
            "lip_u_to_x": self.lip_u_to_x,
            "rel_robustness_coeff": self.rel_robustness_coeff,
        }


def implicit_nn_analyze(s: ImplicitNNSpec) -> ImplicitNNReport:
    mu = log_norm(s.A, NormSpec.linf())
    if mu >= 1.0:
        return ImplicitNNReport(well_posed=False, mu_inf=mu)
    mu_plus = max(mu, 0.0)
    min_diag_minus = min(float(np.min(np.diag(s.A))), 0.0)
    gap = 1.0 - mu_plus
    b_norm = float(np.abs(s.B).sum(axis=1).max()) if s.m else 0.0
    return ImplicitNNReport(
        well_posed=True,
        mu_inf=mu,
        ct_rate=gap,
        alpha_star=1.0 / (1.0 - min_diag_minus),
        dt_factor=1.0 - gap / (1.0 - min_diag_minus),
        lip_u_to_x=b_norm / gap,
        rel_robustness_coeff=1.0 / gap,
    )


def implicit_nn_fixed_point(
    s: ImplicitNNSpec,
    u,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    x0=None,
) -> FixedPointResult:
    """Resuelve x = Φ(Ax + Bu + b) con la iteración de Euler al paso α*."""
    report = implicit_nn_analyze(s)
    if not report.well_posed:
        raise NotHurwitzError(f"implicit network is not well posed: mu_inf(A) = {report.mu_inf:.6g} >= 1")
    mapping = implicit_nn_map(s, report.alpha_star, u)
    start = np.zeros(s.n) if x0 is None else np.asarray(x0, dtype=float)
    return banach_iterate(mapping, start, tol, max_iter, spec=NormSpec.linf(), factor=report.dt_factor)
