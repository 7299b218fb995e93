"""
Modelos incorporados: sistemas afines, flujos de gradiente, redes de tasa de
disparo, sistemas de Lur'e, redes implícitas y la red competitiva positiva.

Cada constructor devuelve un VectorFieldSpec (o DiscreteMapSpec) con
Jacobiano analítico. relu se deriva como escalón (pendiente 0 o 1 casi en todo
punto); los certificados nunca dependen de ese valor en el quiebre.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import expit

from contraction_cert.services.system_model import Box, DiscreteMapSpec, VectorFieldSpec
from contraction_cert.utils.errors import DimensionError, InvalidModelError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu", "custom")


# =========================
# Activaciones
# =========================

def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _relu_slope(z: np.ndarray) -> np.ndarray:
    return (z > 0.0).astype(float)


def _tanh_slope(z: np.ndarray) -> np.ndarray:
    return 1.0 - np.tanh(z) ** 2


@dataclass(frozen=True)
class Activation:
    """Activación diagonal Φ con pendientes restringidas a [d1, d2]."""

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    d1: float
    d2: float


def make_activation(
    name: str,
    d1: Optional[float] = None,
    d2: Optional[float] = None,
    phi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    dphi: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Activation:
    """
    tanh y relu tienen (d1, d2) = (0, 1). custom requiere d1 ≤ d2; sin phi y con
    d1 = d2 la activación es lineal de pendiente d1.
    """
    key = (name or "").strip().lower()
    if key == "tanh":
        return Activation("tanh", np.tanh, _tanh_slope, 0.0, 1.0)
    if key == "relu":
        return Activation("relu", _relu, _relu_slope, 0.0, 1.0)
    if key != "custom":
        raise InvalidModelError(f"unknown activation '{name}' (expected one of {ACTIVATIONS})")
    if d1 is None or d2 is None or float(d1) > float(d2):
        raise InvalidModelError("custom activation requires slope bounds d1 <= d2")
    d1, d2 = float(d1), float(d2)
    if phi is None:
        if d1 != d2:
            raise InvalidModelError("custom activation with d1 < d2 requires phi")
        return Activation("custom", lambda z: d1 * z, lambda z: d1 * np.ones_like(z), d1, d2)
    if dphi is None:
        raise InvalidModelError("custom activation with phi requires its derivative dphi")
    return Activation("custom", phi, dphi, d1, d2)


# =========================
# Especificaciones de modelos
# =========================

def _matrix(M, name: str, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(M, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    if shape is not None and arr.shape != shape:
        raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def _vector(v, name: str, n: int) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


@dataclass(eq=False)
class FiringRateSpec:
    """ẋ = −Cx + Φ(Ax + u), con C diagonal semidefinida positiva."""

    C: np.ndarray
    A: np.ndarray
    u: np.ndarray
    activation: Activation

    def __post_init__(self):
        self.A = _matrix(self.A, "A")
        n = self.A.shape[0]
        self.A = _matrix(self.A, "A", (n, n))
        self.C = _matrix(self.C, "C", (n, n))
        if np.any(self.C != np.diag(np.diag(self.C))):
            raise InvalidModelError("dissipation matrix C must be diagonal")
        if np.any(np.diag(self.C) < 0.0):
            raise InvalidModelError("dissipation matrix C must have nonnegative diagonal")
        self.u = _vector(self.u, "u", n)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d1(self) -> float:
        return self.activation.d1

    @property
    def d2(self) -> float:
        return self.activation.d2


@dataclass(eq=False)
class LureSpec:
    """ẋ = Ax + Bφ(Cx) con φ cocoerciva de parámetro rho; eta_rate es la tasa objetivo."""

    A: np.ndarray
    B: np.ndarray
    C_out: np.ndarray
    rho: float
    eta_rate: float

    def __post_init__(self):
        self.A = _matrix(self.A, "A")
        n = self.A.shape[0]
        self.A = _matrix(self.A, "A", (n, n))
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1) if np.size(self.B) else np.zeros((n, 0))
        m = self.B.shape[1]
        self.C_out = _matrix(self.C_out, "C", (m, n)) if m else np.zeros((0, n))
        if not float(self.rho) > 0.0:
            raise InvalidModelError("cocoercivity parameter rho must be > 0")
        if not float(self.eta_rate) > 0.0:
            raise InvalidModelError("target rate eta must be > 0")
        self.rho = float(self.rho)
        self.eta_rate = float(self.eta_rate)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(eq=False)
class ImplicitNNSpec:
    """x = Φ(Ax + Bu + b)."""

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    activation: Activation

    def __post_init__(self):
        self.A = _matrix(self.A, "A")
        n = self.A.shape[0]
        self.A = _matrix(self.A, "A", (n, n))
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        self.b = _vector(self.b, "b", n)
        if (self.activation.d1, self.activation.d2) != (0.0, 1.0):
            raise InvalidModelError("implicit networks require an activation with slopes in [0, 1]")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


# =========================
# Campos vectoriales
# =========================

def linear_field(A, a=None, domain: Optional[Box] = None, name: str = "linear") -> VectorFieldSpec:
    """F(x) = Ax + a."""
    A = _matrix(A, "A")
    n = A.shape[0]
    A = _matrix(A, "A", (n, n))
    a = np.zeros(n) if a is None else _vector(a, "a", n)
    return VectorFieldSpec(
        evaluator=lambda x: A @ x + a,
        jacobian=lambda x: A,
        domain=domain or Box.symmetric(1.0, n),
        name=name,
    )


def quadratic_gradient_field(Q, q=None, domain: Optional[Box] = None) -> VectorFieldSpec:
    """ẋ = −∇f para f(x) = ½xᵀQx + qᵀx."""
    Q = _matrix(Q, "Q")
    n = Q.shape[0]
    Q = 0.5 * (Q + Q.T)
    q = np.zeros(n) if q is None else _vector(q, "q", n)
    return VectorFieldSpec(
        evaluator=lambda x: -(Q @ x + q),
        jacobian=lambda x: -Q,
        domain=domain or Box.symmetric(1.0, n),
        name="gradient_flow_quadratic",
    )


def logistic_gradient_field(features, labels, reg: float, domain: Optional[Box] = None) -> VectorFieldSpec:
    """
    ẋ = −∇f para la pérdida logística regularizada
    f(x) = (1/m) Σ log(1 + exp(−yᵢ aᵢᵀx)) + (reg/2)‖x‖².
    """
    X = _matrix(features, "features")
    m, n = X.shape
    y = _vector(labels, "labels", m)
    if not float(reg) > 0.0:
        raise InvalidModelError("logistic regularization weight must be > 0")
    reg = float(reg)

    def _grad(w: np.ndarray) -> np.ndarray:
        s = expit(-y * (X @ w))
        return -(X.T @ (y * s)) / m + reg * w

    def _hess(w: np.ndarray) -> np.ndarray:
        s = expit(y * (X @ w))
        weights = s * (1.0 - s)
        return (X.T * weights) @ X / m + reg * np.eye(n)

    return VectorFieldSpec(
        evaluator=lambda w: -_grad(w),
        jacobian=lambda w: -_hess(w),
        domain=domain or Box.symmetric(1.0, n),
        name="gradient_flow_logistic",
    )


def double_well_gradient_field(a, domain: Optional[Box] = None) -> VectorFieldSpec:
    """
    ẋ = −∇f para el pozo doble separable f(x) = Σ (xᵢ⁴/4 − aᵢxᵢ²/2), es decir
    ẋ = a⊙x − x³. Con a > 0 los mínimos están en ±√aᵢ.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float)).reshape(-1)
    n = a.shape[0]
    return VectorFieldSpec(
        evaluator=lambda x: a * x - x**3,
        jacobian=lambda x: np.diag(a - 3.0 * x**2),
        domain=domain or Box.symmetric(2.0, n),
        name="gradient_flow_double_well",
    )


def firing_rate_field(
    spec: FiringRateSpec,
    domain: Optional[Box] = None,
    input_domain: Optional[Box] = None,
) -> VectorFieldSpec:
    """
    Campo de tasa de disparo. Con input_domain el sesgo u pasa a ser la entrada
    θ del campo: F(x, θ) = −Cx + Φ(Ax + θ).
    """
    C, A, act = spec.C, spec.A, spec.activation
    dom = domain or Box.symmetric(1.0, spec.n)
    if input_domain is None:
        u = spec.u
        return VectorFieldSpec(
            evaluator=lambda x: -C @ x + act.phi(A @ x + u),
            jacobian=lambda x: -C + act.dphi(A @ x + u)[:, None] * A,
            domain=dom,
            name="firing_rate",
        )
    if input_domain.dim != spec.n:
        raise DimensionError(f"input domain has dimension {input_domain.dim}, expected {spec.n}")
    return VectorFieldSpec(
        evaluator=lambda x, th: -C @ x + act.phi(A @ x + th),
        jacobian=lambda x, th: -C + act.dphi(A @ x + th)[:, None] * A,
        theta_jacobian=lambda x, th: np.diag(act.dphi(A @ x + th)),
        domain=dom,
        parameter_domain=input_domain,
        name="firing_rate",
    )


def lure_field(spec: LureSpec, domain: Optional[Box] = None, activation: str = "relu") -> VectorFieldSpec:
    """ẋ = Ax + Bφ(Cx); relu es cocoerciva con ρ = 1."""
    act = make_activation(activation)
    A, B, C = spec.A, spec.B, spec.C_out
    return VectorFieldSpec(
        evaluator=lambda x: A @ x + B @ act.phi(C @ x),
        jacobian=lambda x: A + (B * act.dphi(C @ x)[None, :]) @ C,
        domain=domain or Box.symmetric(1.0, spec.n),
        name="lure",
    )


def implicit_nn_field(spec: ImplicitNNSpec, u, domain: Optional[Box] = None) -> VectorFieldSpec:
    """Modelo recurrente ẋ = −x + Φ(Ax + Bu + b) a entrada u fija."""
    A, act = spec.A, spec.activation
    drive = spec.B @ np.asarray(u, dtype=float).reshape(-1) + spec.b
    eye = np.eye(spec.n)
    return VectorFieldSpec(
        evaluator=lambda x: -x + act.phi(A @ x + drive),
        jacobian=lambda x: -eye + act.dphi(A @ x + drive)[:, None] * A,
        domain=domain or Box.symmetric(1.0, spec.n),
        name="implicit_nn",
    )


def implicit_nn_map(spec: ImplicitNNSpec, alpha: float, u, domain: Optional[Box] = None) -> DiscreteMapSpec:
    """Iteración x ← (1−α)x + αΦ(Ax + Bu + b)."""
    if not float(alpha) > 0.0:
        raise InvalidModelError("step alpha must be > 0")
    A, act = spec.A, spec.activation
    drive = spec.B @ np.asarray(u, dtype=float).reshape(-1) + spec.b
    eye = np.eye(spec.n)
    alpha = float(alpha)
    return DiscreteMapSpec(
        evaluator=lambda x: (1.0 - alpha) * x + alpha * act.phi(A @ x + drive),
        jacobian=lambda x: (1.0 - alpha) * eye + alpha * act.dphi(A @ x + drive)[:, None] * A,
        domain=domain or Box.symmetric(1.0, spec.n),
        name="implicit_nn_map",
    )


def validate_dictionary(Phi) -> np.ndarray:
    """Diccionario no negativo con columnas de norma unitaria."""
    Phi = _matrix(Phi, "Phi")
    if np.any(Phi < 0.0):
        raise InvalidModelError("dictionary Phi must be entrywise nonnegative")
    norms = np.linalg.norm(Phi, axis=0)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise InvalidModelError("dictionary Phi must have unit-norm columns")
    return Phi


def competitive_field(Phi, u, lam: float, domain: Optional[Box] = None) -> VectorFieldSpec:
    """
    Red competitiva positiva:
    ẋᵢ = −xᵢ + relu(−Σ_{j≠i} ΦᵢᵀΦⱼ xⱼ + Φᵢᵀu − λ).
    """
    Phi = validate_dictionary(Phi)
    M, N = Phi.shape
    u = _vector(u, "u", M)
    if not float(lam) > 0.0:
        raise InvalidModelError("sparsity weight lambda must be > 0")
    lam = float(lam)
    W = Phi.T @ Phi - np.eye(N)
    drive = Phi.T @ u - lam
    eye = np.eye(N)
    return VectorFieldSpec(
        evaluator=lambda x: -x + _relu(-W @ x + drive),
        jacobian=lambda x: -eye - _relu_slope(-W @ x + drive)[:, None] * W,
        domain=domain or Box(np.zeros(N), np.ones(N)),
        name="competitive",
    )
