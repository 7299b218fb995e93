"""
Normas vectoriales, normas matriciales inducidas y normas logarítmicas.

Todas las normas ponderadas se reducen a su familia base mediante un cambio de
coordenadas:
- ℓ2 ponderada con P = ΘᵀΘ:  ‖x‖_{2,P} = ‖Θx‖₂,   A ↦ ΘAΘ⁻¹
- ℓ∞ ponderada con η > 0:    ‖x‖_{∞,η} = ‖D⁻¹x‖∞, A ↦ D⁻¹AD, D = diag(η)

Así las fórmulas cerradas viven en un solo lugar y la ponderación trivial
(P = I, η = 1) recorre exactamente el mismo camino que la norma sin peso.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from contraction_cert.utils import config
from contraction_cert.utils.errors import (
    DimensionError,
    NumericalFailure,
    UnsupportedNormError,
    WeightError,
)

logger = logging.getLogger(__name__)

# Hasta esta dimensión la norma de operador con entrada ℓ∞ se calcula
# enumerando los vértices del cubo unitario.
_VERTEX_ENUM_MAX_DIM = 12


class NormKind(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"
    LP = "lp"
    WEIGHTED_L2 = "wl2"
    WEIGHTED_LINF = "winf"


_BASE_KIND = {
    NormKind.L1: NormKind.L1,
    NormKind.L2: NormKind.L2,
    NormKind.LINF: NormKind.LINF,
    NormKind.LP: NormKind.LP,
    NormKind.WEIGHTED_L2: NormKind.L2,
    NormKind.WEIGHTED_LINF: NormKind.LINF,
}


@dataclass(eq=False)
class NormSpec:
    """
    Qué norma gobierna un cálculo.

    Usar los constructores l1(), l2(), linf(), lp(p), weighted_l2(P) y
    weighted_linf(eta); validan el peso y precalculan Θ, Θ⁻¹.
    """

    kind: NormKind
    p: Optional[float] = None
    P: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None
    _theta: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _theta_inv: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _trivial_weight: bool = field(default=False, init=False, repr=False)

    def __post_init__(self):
        self.kind = NormKind(self.kind)
        if self.kind == NormKind.LP:
            if self.p is None or not np.isfinite(self.p) or not (1.0 < float(self.p)):
                raise UnsupportedNormError(f"lp exponent must satisfy 1 < p < inf, got {self.p}")
            self.p = float(self.p)
        elif self.kind == NormKind.WEIGHTED_L2:
            self._init_weighted_l2()
        elif self.kind == NormKind.WEIGHTED_LINF:
            self._init_weighted_linf()

    def _init_weighted_l2(self) -> None:
        if self.P is None:
            raise WeightError("weighted l2 norm requires a weight matrix P")
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise DimensionError(f"weight P must be a non-empty square matrix, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise WeightError("weight P has non-finite entries")
        scale = 1.0 + float(np.max(np.abs(P)))
        if float(np.max(np.abs(P - P.T))) > config.PSD_REL_TOL * scale:
            raise WeightError("weight P is not symmetric")
        P = 0.5 * (P + P.T)
        self.P = P
        n = P.shape[0]
        if np.array_equal(P, np.eye(n)):
            self._theta = np.eye(n)
            self._theta_inv = np.eye(n)
            self._trivial_weight = True
            return
        # Raíz simétrica vía eigh (no Cholesky)
        w, V = np.linalg.eigh(P)
        if float(w.min()) <= 0.0:
            raise WeightError(f"weight P is not positive definite (min eigenvalue {w.min():.3e})")
        sq = np.sqrt(w)
        self._theta = (V * sq) @ V.T
        self._theta_inv = (V / sq) @ V.T

    def _init_weighted_linf(self) -> None:
        if self.eta is None:
            raise WeightError("weighted linf norm requires a weight vector eta")
        eta = np.array(self.eta, dtype=float).reshape(-1)
        if eta.size == 0:
            raise DimensionError("weight eta is empty")
        if not np.all(np.isfinite(eta)) or float(eta.min()) <= 0.0:
            raise WeightError("weight eta must be entrywise positive")
        self.eta = eta
        self._trivial_weight = bool(np.all(eta == 1.0))

    # ---- constructores ----

    @classmethod
    def l1(cls) -> "NormSpec":
        return cls(NormKind.L1)

    @classmethod
    def l2(cls) -> "NormSpec":
        return cls(NormKind.L2)

    @classmethod
    def linf(cls) -> "NormSpec":
        return cls(NormKind.LINF)

    @classmethod
    def lp(cls, p: float) -> "NormSpec":
        return cls(NormKind.LP, p=p)

    @classmethod
    def weighted_l2(cls, P) -> "NormSpec":
        return cls(NormKind.WEIGHTED_L2, P=P)

    @classmethod
    def weighted_linf(cls, eta) -> "NormSpec":
        return cls(NormKind.WEIGHTED_LINF, eta=eta)

    # ---- propiedades ----

    @property
    def base_kind(self) -> NormKind:
        return _BASE_KIND[self.kind]

    @property
    def is_weighted(self) -> bool:
        return self.kind in (NormKind.WEIGHTED_L2, NormKind.WEIGHTED_LINF)

    @property
    def dim(self) -> Optional[int]:
        """Dimensión fijada por el peso; None para normas sin peso."""
        if self.kind == NormKind.WEIGHTED_L2:
            return int(self.P.shape[0])
        if self.kind == NormKind.WEIGHTED_LINF:
            return int(self.eta.shape[0])
        return None

    @property
    def label(self) -> str:
        if self.kind == NormKind.LP:
            return f"lp:{self.p:g}"
        return self.kind.value

    def check_dim(self, n: int) -> None:
        d = self.dim
        if d is not None and d != n:
            raise DimensionError(f"{self.kind.value} weight has dimension {d}, expected {n}")

    # ---- cambios de coordenadas ----

    def to_base_vector(self, v: np.ndarray) -> np.ndarray:
        """Lleva v a las coordenadas donde la norma es la de la familia base."""
        if self.kind == NormKind.WEIGHTED_L2 and not self._trivial_weight:
            return self._theta @ v
        if self.kind == NormKind.WEIGHTED_LINF and not self._trivial_weight:
            return v / self.eta
        return v

    def from_base_vector(self, z: np.ndarray) -> np.ndarray:
        if self.kind == NormKind.WEIGHTED_L2 and not self._trivial_weight:
            return self._theta_inv @ z
        if self.kind == NormKind.WEIGHTED_LINF and not self._trivial_weight:
            return z * self.eta
        return z

    def to_base_rows(self, V: np.ndarray) -> np.ndarray:
        """to_base_vector aplicado a cada fila de V."""
        if self.kind == NormKind.WEIGHTED_L2 and not self._trivial_weight:
            return V @ self._theta.T
        if self.kind == NormKind.WEIGHTED_LINF and not self._trivial_weight:
            return V / self.eta[None, :]
        return V

    def from_base_rows(self, Z: np.ndarray) -> np.ndarray:
        if self.kind == NormKind.WEIGHTED_L2 and not self._trivial_weight:
            return Z @ self._theta_inv.T
        if self.kind == NormKind.WEIGHTED_LINF and not self._trivial_weight:
            return Z * self.eta[None, :]
        return Z

    def to_base_matrix(self, A: np.ndarray) -> np.ndarray:
        """A ↦ ΘAΘ⁻¹ (ℓ2 ponderada) o D⁻¹AD (ℓ∞ ponderada)."""
        if self.kind == NormKind.WEIGHTED_L2 and not self._trivial_weight:
            return self._theta @ A @ self._theta_inv
        if self.kind == NormKind.WEIGHTED_LINF and not self._trivial_weight:
            return A * self.eta[None, :] / self.eta[:, None]
        return A

    # ---- serialización ----

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value}
        if self.kind == NormKind.LP:
            data["p"] = self.p
        elif self.kind == NormKind.WEIGHTED_L2:
            data["P"] = self.P.tolist()
        elif self.kind == NormKind.WEIGHTED_LINF:
            data["eta"] = self.eta.tolist()
        return data

    @classmethod
    def from_json(cls, data: Any) -> "NormSpec":
        """Acepta "l1"/"l2"/"linf" o un objeto {"kind": ..., "p"|"P"|"eta": ...}."""
        if isinstance(data, str):
            data = {"kind": data}
        if not isinstance(data, dict) or "kind" not in data:
            raise UnsupportedNormError(f"invalid norm description: {data!r}")
        try:
            kind = NormKind(str(data["kind"]).strip().lower())
        except ValueError:
            raise UnsupportedNormError(f"unknown norm kind '{data['kind']}'")
        if kind == NormKind.LP:
            return cls.lp(data.get("p"))
        if kind == NormKind.WEIGHTED_L2:
            return cls.weighted_l2(data.get("P"))
        if kind == NormKind.WEIGHTED_LINF:
            return cls.weighted_linf(data.get("eta"))
        return cls(kind)


@dataclass(frozen=True)
class SpectralSummary:
    rho: float
    alpha: float

    def to_json(self) -> Dict[str, float]:
        return {"rho": self.rho, "alpha": self.alpha}


# =========================
# Helpers
# =========================

def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"expected a non-empty vector, got shape {arr.shape}")
    return arr


def as_square(A) -> np.ndarray:
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {arr.shape}")
    return arr


def _require_matrix_spec(spec: NormSpec) -> None:
    if spec.kind == NormKind.LP:
        raise UnsupportedNormError("induced matrix norms are not available for general lp")


def _base_matrix_norm(B: np.ndarray, kind: NormKind) -> float:
    if kind == NormKind.L1:
        return float(np.abs(B).sum(axis=0).max())
    if kind == NormKind.LINF:
        return float(np.abs(B).sum(axis=1).max())
    return float(np.linalg.norm(B, 2))


def _base_log_norm(B: np.ndarray, kind: NormKind) -> float:
    if kind == NormKind.L2:
        return float(np.linalg.eigvalsh(0.5 * (B + B.T))[-1])
    if kind == NormKind.L1:
        B = B.T
    diag = np.diag(B)
    off = np.abs(B).sum(axis=1) - np.abs(diag)
    return float(np.max(diag + off))


def _base_vector_norm(z: np.ndarray, kind: NormKind, p: Optional[float] = None) -> float:
    if kind == NormKind.L1:
        return float(np.abs(z).sum())
    if kind == NormKind.LINF:
        return float(np.abs(z).max())
    if kind == NormKind.LP:
        return float(np.linalg.norm(z, ord=p))
    return float(np.linalg.norm(z))


# =========================
# Operaciones
# =========================

def vector_norm(v, spec: NormSpec) -> float:
    """‖v‖ según spec."""
    v = _as_vector(v)
    spec.check_dim(v.shape[0])
    return _base_vector_norm(spec.to_base_vector(v), spec.base_kind, spec.p)


def matrix_norm(A, spec: NormSpec) -> float:
    """Norma inducida por spec, por fórmula cerrada."""
    _require_matrix_spec(spec)
    A = as_square(A)
    spec.check_dim(A.shape[0])
    return _base_matrix_norm(spec.to_base_matrix(A), spec.base_kind)


def log_norm(A, spec: NormSpec) -> float:
    """
    Norma logarítmica μ(A) = lim_{h→0⁺} (‖I+hA‖ − 1)/h, por fórmula cerrada.

    - ℓ∞: maxᵢ (aᵢᵢ + Σ_{j≠i} |aᵢⱼ|)
    - ℓ1: maxⱼ (aⱼⱼ + Σ_{i≠j} |aᵢⱼ|)
    - ℓ2: λmax((A + Aᵀ)/2)
    - ponderadas: la de la familia base sobre la matriz transformada
    """
    _require_matrix_spec(spec)
    A = as_square(A)
    spec.check_dim(A.shape[0])
    return _base_log_norm(spec.to_base_matrix(A), spec.base_kind)


def log_norm_limit_oracle(
    A,
    spec: NormSpec,
    h_sequence: Sequence[float] = config.LIMIT_ORACLE_STEPS,
) -> float:
    """
    Evalúa la definición por límite de μ(A) de forma independiente.

    Calcula q(h) = (‖I+hA‖ − 1)/h para cada h y extrapola linealmente a h = 0
    (ordenada al origen del ajuste por mínimos cuadrados).
    """
    A = as_square(A)
    hs = np.asarray(list(h_sequence), dtype=float)
    if hs.size == 0:
        raise ValueError("h_sequence must be non-empty")
    if np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise ValueError("h_sequence must be positive and strictly decreasing")
    identity = np.eye(A.shape[0])
    q = np.array([(matrix_norm(identity + h * A, spec) - 1.0) / h for h in hs])
    if hs.size == 1:
        return float(q[0])
    _slope, intercept = np.polyfit(hs, q, 1)
    return float(intercept)


def spectral_summary(A) -> SpectralSummary:
    """Radio espectral ρ(A) y abscisa espectral α(A)."""
    A = as_square(A)
    if not np.all(np.isfinite(A)):
        raise NumericalFailure("matrix has non-finite entries")
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as e:
        raise NumericalFailure(f"eigenvalue computation did not converge: {e}") from e
    return SpectralSummary(rho=float(np.max(np.abs(eig))), alpha=float(np.max(eig.real)))


def sym_eig_extremes(S) -> Tuple[float, float]:
    """(λmin, λmax) de la parte simétrica de S."""
    S = as_square(S)
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(w[0]), float(w[-1])


def is_psd(S, rel_tol: float = config.PSD_REL_TOL) -> bool:
    """Semidefinida positiva si λmin ≥ −tol·(1 + |λmax|)."""
    lo, hi = sym_eig_extremes(S)
    return lo >= -rel_tol * (1.0 + abs(hi))


def is_nsd(S, rel_tol: float = config.PSD_REL_TOL) -> bool:
    return is_psd(-np.asarray(S, dtype=float), rel_tol)


def mixed_operator_norm(
    M,
    out_spec: NormSpec,
    in_spec: NormSpec,
    samples: int = config.DIRECTION_COUNT,
    seed: int = config.DEFAULT_SEED,
) -> float:
    """
    sup_{‖v‖_in = 1} ‖Mv‖_out para M posiblemente rectangular.

    Exacto cuando ambas normas son de la misma familia, cuando la entrada es ℓ1
    (máximo sobre columnas), cuando la entrada es de familia ℓ∞ con dimensión
    pequeña (vértices del cubo) y para entrada ℓ2 con salida ℓ∞ (filas).
    En otro caso devuelve una cota inferior muestreada sobre la esfera unitaria.
    """
    _require_matrix_spec(out_spec)
    _require_matrix_spec(in_spec)
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise DimensionError(f"expected a non-empty matrix, got shape {M.shape}")
    m, n = M.shape
    out_spec.check_dim(m)
    in_spec.check_dim(n)

    # B actúa entre coordenadas base: z_in ↦ to_base_out(M from_base_in(z_in))
    B = np.column_stack([out_spec.to_base_vector(M @ in_spec.from_base_vector(e)) for e in np.eye(n)])
    out_kind, in_kind = out_spec.base_kind, in_spec.base_kind

    if out_kind == in_kind:
        return _base_matrix_norm(B, out_kind)
    if in_kind == NormKind.L1:
        return float(max(_base_vector_norm(B[:, j], out_kind) for j in range(n)))
    if in_kind == NormKind.L2 and out_kind == NormKind.LINF:
        return float(np.linalg.norm(B, axis=1).max())
    if in_kind == NormKind.LINF and n <= _VERTEX_ENUM_MAX_DIM:
        return float(max(_base_vector_norm(B @ np.array(s), out_kind) for s in product((-1.0, 1.0), repeat=n)))

    logger.debug(f"Sampling operator norm {in_spec.label}->{out_spec.label} with {samples} directions")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((samples, n))
    Z /= np.array([_base_vector_norm(z, in_kind) for z in Z])[:, None]
    return float(max(_base_vector_norm(B @ z, out_kind) for z in Z))


def parse_norm_flag(flag: str) -> NormSpec:
    """
    Interpreta el valor de --norm.

    Formatos: l1 | l2 | linf | lp:<p> | wl2:<archivo JSON con P> | winf:<archivo JSON con eta>
    """
    text = (flag or "").strip()
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name in ("l1", "l2", "linf") and not arg:
        return NormSpec(NormKind(name))
    if name == "lp" and arg:
        try:
            return NormSpec.lp(float(arg))
        except ValueError:
            raise UnsupportedNormError(f"invalid lp exponent '{arg}'")
    if name in ("wl2", "winf") and arg:
        try:
            with open(arg, "r", encoding="utf-8") as fh:
                weight = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise WeightError(f"could not read weight file '{arg}': {e}") from e
        if isinstance(weight, dict):
            weight = weight.get("P" if name == "wl2" else "eta")
        return NormSpec.weighted_l2(weight) if name == "wl2" else NormSpec.weighted_linf(weight)
    raise UnsupportedNormError(f"unsupported norm flag '{flag}'")
