"""
Campos vectoriales, mapas discretos y estimación muestreada de constantes de
Lipschitz / Lipschitz unilaterales.

Todas las cotas de este módulo son cotas inferiores obtenidas por muestreo
sobre la caja de dominio del usuario. Los certificados viven en
services.certificates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from contraction_cert.services.norms import (
    NormKind,
    NormSpec,
    log_norm,
    matrix_norm,
    mixed_operator_norm,
)
from contraction_cert.utils import config
from contraction_cert.utils.errors import (
    ContractionError,
    DimensionError,
    EvaluationError,
    UnsupportedNormError,
)
from contraction_cert.utils.parallel import max_reduce
from contraction_cert.utils.run_metrics import get_run_metrics

logger = logging.getLogger(__name__)

SAMPLED_LABEL = "lower bound (sampling)"


# =========================
# Tipos
# =========================

@dataclass(frozen=True, eq=False)
class Box:
    """Caja [lo, hi] alineada con los ejes."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise DimensionError(f"box bounds must be non-empty and of equal length, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DimensionError("box bounds must be finite")
        if np.any(lo >= hi):
            raise DimensionError("box requires lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, radius: float, n: int) -> "Box":
        return cls(-radius * np.ones(n), radius * np.ones(n))

    @classmethod
    def product(cls, first: "Box", second: "Box") -> "Box":
        return cls(np.concatenate([first.lo, second.lo]), np.concatenate([first.hi, second.hi]))

    @property
    def dim(self) -> int:
        return int(self.lo.shape[0])

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def to_json(self) -> Dict[str, List[float]]:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Box":
        return cls(data["lo"], data["hi"])


@dataclass(eq=False)
class VectorFieldSpec:
    """
    Sistema en tiempo continuo ẋ = F(x) o ẋ = F(x, θ).

    evaluator: x ↦ F(x), o (x, θ) ↦ F(x, θ) si parameter_domain no es None
    jacobian: DF analítico con la misma firma; si falta se usan diferencias centrales
    theta_jacobian: ∂F/∂θ analítico (opcional, solo campos paramétricos)
    h_fd: paso fijo de diferencias finitas; None usa 1e-5·(1+‖x‖∞)
    """

    evaluator: Callable[..., Any]
    domain: Box
    jacobian: Optional[Callable[..., Any]] = None
    parameter_domain: Optional[Box] = None
    theta_jacobian: Optional[Callable[..., Any]] = None
    h_fd: Optional[float] = None
    name: str = "custom"

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def parametric(self) -> bool:
        return self.parameter_domain is not None

    @property
    def theta_dim(self) -> int:
        return self.parameter_domain.dim if self.parameter_domain is not None else 0

    def _theta_or_default(self, theta) -> Optional[np.ndarray]:
        if not self.parametric:
            return None
        if theta is None:
            return self.parameter_domain.center
        return np.asarray(theta, dtype=float).reshape(-1)

    def _call(self, fn: Callable[..., Any], x: np.ndarray, theta: Optional[np.ndarray]) -> np.ndarray:
        try:
            out = fn(x, theta) if self.parametric else fn(x)
        except ContractionError:
            raise
        except Exception as e:
            raise EvaluationError(f"{self.name}: evaluator failed at x={np.round(x, 6).tolist()}: {e}") from e
        return np.asarray(out, dtype=float)

    def evaluate(self, x, theta=None) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        get_run_metrics().increment_counter("field_evaluations")
        return self._call(self.evaluator, x, self._theta_or_default(theta)).reshape(-1)


@dataclass(eq=False)
class DiscreteMapSpec(VectorFieldSpec):
    """Mapa x_{k+1} = F(x_k); misma interfaz que VectorFieldSpec."""


class SamplerKind(str, Enum):
    UNIFORM_GRID = "grid"
    LATIN_HYPERCUBE = "lhs"
    RANDOM_UNIFORM = "random"


@dataclass(frozen=True)
class Sampler:
    kind: SamplerKind
    count: int
    seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        if int(self.count) < 1:
            raise ValueError("sampler count must be >= 1")

    @classmethod
    def uniform_grid(cls, points_per_axis: int = config.GRID_POINTS_PER_AXIS) -> "Sampler":
        return cls(SamplerKind.UNIFORM_GRID, int(points_per_axis))

    @classmethod
    def latin_hypercube(cls, count: int = config.LHS_COUNT, seed: int = config.DEFAULT_SEED) -> "Sampler":
        return cls(SamplerKind.LATIN_HYPERCUBE, int(count), int(seed))

    @classmethod
    def random_uniform(cls, count: int, seed: int = config.DEFAULT_SEED) -> "Sampler":
        return cls(SamplerKind.RANDOM_UNIFORM, int(count), int(seed))

    def points(self, box: Box) -> np.ndarray:
        """Matriz (N, n) de puntos dentro de box."""
        n = box.dim
        if self.kind == SamplerKind.UNIFORM_GRID:
            if self.count == 1:
                return box.center[None, :]
            axes = [np.linspace(box.lo[i], box.hi[i], self.count) for i in range(n)]
            mesh = np.meshgrid(*axes, indexing="ij")
            return np.stack([m.reshape(-1) for m in mesh], axis=1)
        if self.kind == SamplerKind.LATIN_HYPERCUBE:
            unit = _latin_hypercube(n, self.seed).random(self.count)
            return qmc.scale(unit, box.lo, box.hi)
        rng = np.random.default_rng(self.seed)
        return rng.uniform(box.lo, box.hi, size=(self.count, n))

    def to_json(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "count": self.count, "seed": self.seed}


def _latin_hypercube(n: int, seed: int) -> qmc.LatinHypercube:
    # SciPy >= 1.15 renombra seed -> rng
    try:
        return qmc.LatinHypercube(d=n, rng=np.random.default_rng(seed))
    except TypeError:
        return qmc.LatinHypercube(d=n, seed=np.random.default_rng(seed))


def default_sampler(n: int, seed: int = config.DEFAULT_SEED) -> Sampler:
    """Grilla de 11 puntos por eje si n ≤ 3, hipercubo latino de 2000 puntos si no."""
    if n <= config.GRID_MAX_DIM:
        return Sampler.uniform_grid(config.GRID_POINTS_PER_AXIS)
    return Sampler.latin_hypercube(config.LHS_COUNT, seed)


@dataclass
class SampledBound:
    """Supremo muestreado: cota inferior del supremo real, nunca un certificado."""

    value: float
    argmax: np.ndarray
    samples: int
    domain: Box
    argmax_theta: Optional[np.ndarray] = None
    certified: bool = False
    label: str = SAMPLED_LABEL

    def to_json(self) -> Dict[str, Any]:
        data = {
            "value": self.value,
            "argmax": self.argmax.tolist(),
            "samples": self.samples,
            "domain": self.domain.to_json(),
            "certified": self.certified,
            "label": self.label,
        }
        if self.argmax_theta is not None:
            data["argmax_theta"] = self.argmax_theta.tolist()
        return data


# =========================
# Jacobianos
# =========================

def _as_point(f: VectorFieldSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != f.dim:
        raise DimensionError(f"{f.name}: point has dimension {x.shape[0]}, field has {f.dim}")
    return x


def _central_differences(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, h: float) -> np.ndarray:
    cols = []
    for j in range(z.shape[0]):
        e = np.zeros_like(z)
        e[j] = h
        cols.append((fn(z + e) - fn(z - e)) / (2.0 * h))
    return np.column_stack(cols)


def fd_step(f: VectorFieldSpec, x: np.ndarray) -> float:
    if f.h_fd is not None:
        return float(f.h_fd)
    return config.FD_REL_STEP * (1.0 + float(np.max(np.abs(x))))


def jacobian_at(f: VectorFieldSpec, x, theta=None) -> np.ndarray:
    """
    DF(x) (o ∂F/∂x en (x, θ)).

    Usa el Jacobiano analítico si existe; si no, diferencias centrales con
    paso 1e-5·(1+‖x‖∞). Fuera del dominio solo advierte.
    """
    x = _as_point(f, x)
    if not f.domain.contains(x):
        logger.warning(f"{f.name}: Jacobian requested outside the domain box at x={np.round(x, 6).tolist()}")
    th = f._theta_or_default(theta)
    get_run_metrics().increment_counter("jacobian_evaluations")
    if f.jacobian is not None:
        J = f._call(f.jacobian, x, th)
        return np.atleast_2d(J)
    h = fd_step(f, x)
    return _central_differences(lambda z: f.evaluate(z, th), x, h)


def theta_jacobian_at(f: VectorFieldSpec, x, theta=None) -> np.ndarray:
    """∂F/∂θ en (x, θ); diferencias centrales si no hay forma analítica."""
    if not f.parametric:
        raise ValueError(f"{f.name}: field has no parameter channel")
    x = _as_point(f, x)
    th = f._theta_or_default(theta)
    if f.theta_jacobian is not None:
        return np.atleast_2d(f._call(f.theta_jacobian, x, th))
    h = config.FD_REL_STEP * (1.0 + float(np.max(np.abs(th))))
    return _central_differences(lambda t: f.evaluate(x, t), th, h)


# =========================
# Estimaciones muestreadas
# =========================

def sample_states(f: VectorFieldSpec, sampler: Optional[Sampler]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Puntos de muestreo; para campos paramétricos se muestrea la caja producto."""
    sampler = sampler or default_sampler(f.dim + f.theta_dim)
    if not f.parametric:
        return sampler.points(f.domain), None
    pts = sampler.points(Box.product(f.domain, f.parameter_domain))
    return pts[:, : f.dim], pts[:, f.dim :]


def _sampled_sup(
    f: VectorFieldSpec,
    sampler: Optional[Sampler],
    pointwise: Callable[[np.ndarray, Optional[np.ndarray]], float],
) -> SampledBound:
    X, T = sample_states(f, sampler)
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    rows = X if T is None else np.hstack([X, T])
    n = f.dim

    def _value(row: np.ndarray) -> float:
        return pointwise(row[:n], None if T is None else row[n:])

    value, idx, _ = max_reduce(_value, rows)
    return SampledBound(
        value=value,
        argmax=X[idx].copy(),
        samples=int(X.shape[0]),
        domain=f.domain,
        argmax_theta=None if T is None else T[idx].copy(),
    )


def estimate_lip(f: VectorFieldSpec, spec: NormSpec, sampler: Optional[Sampler] = None) -> SampledBound:
    """sup muestreado de ‖DF(x)‖ (cota inferior de Lip(F))."""
    return _sampled_sup(f, sampler, lambda x, th: matrix_norm(jacobian_at(f, x, th), spec))


def estimate_osl(f: VectorFieldSpec, spec: NormSpec, sampler: Optional[Sampler] = None) -> SampledBound:
    """sup muestreado de μ(DF(x)) (cota inferior de osL(F))."""
    return _sampled_sup(f, sampler, lambda x, th: log_norm(jacobian_at(f, x, th), spec))


def estimate_lip_theta(
    f: VectorFieldSpec,
    x_spec: NormSpec,
    theta_spec: NormSpec,
    sampler: Optional[Sampler] = None,
) -> SampledBound:
    """sup muestreado de ‖∂F/∂θ‖ entre ‖·‖_θ y ‖·‖_x."""
    if not f.parametric:
        raise ValueError(f"{f.name}: field has no parameter channel")
    return _sampled_sup(
        f,
        sampler,
        lambda x, th: mixed_operator_norm(theta_jacobian_at(f, x, th), x_spec, theta_spec),
    )


# =========================
# Condiciones de la tabla diferencial / integral
# =========================

def tie_set(v, rel_tol: float = config.TIE_REL_TOL) -> np.ndarray:
    """I∞(v): índices con |vᵢ| = ‖v‖∞ dentro de rel_tol·‖v‖∞."""
    a = np.abs(np.asarray(v, dtype=float).reshape(-1))
    m = float(a.max())
    return np.flatnonzero(a >= m - rel_tol * m)


def _check_table_spec(spec: NormSpec) -> None:
    if spec.kind == NormKind.LP:
        raise UnsupportedNormError("differential/integral conditions are not defined for general lp")


def table_quotients(spec: NormSpec, D: np.ndarray, G: np.ndarray) -> np.ndarray:
    """
    Cocientes por filas para desplazamientos D y respuestas G.

    G es F(x)−F(y) (condición integral) o DF(x)·v (condición diferencial):
    - ℓ2 / ℓ2,P: dᵀP g / ‖d‖²_{2,P}
    - ℓ1:        sign(d)ᵀ g / ‖d‖₁
    - ℓ∞ / ℓ∞,η: max_{i∈I∞(d)} dᵢgᵢ / ‖d‖²∞ (en coordenadas ponderadas)
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    kind = spec.base_kind
    Z = spec.to_base_rows(D)
    W = spec.to_base_rows(G)
    if kind == NormKind.L2:
        return np.sum(Z * W, axis=1) / np.sum(Z * Z, axis=1)
    if kind == NormKind.L1:
        return np.sum(np.sign(Z) * W, axis=1) / np.sum(np.abs(Z), axis=1)
    A = np.abs(Z)
    m = A.max(axis=1)
    ties = A >= (m - config.TIE_REL_TOL * m)[:, None]
    prod = np.where(ties, Z * W, -np.inf)
    return prod.max(axis=1) / (m * m)


def _nonzero(v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.any(v != 0.0):
        raise ValueError(f"{what} must be nonzero")
    return v


def one_sided_pair_quotient(f: VectorFieldSpec, spec: NormSpec, x, y, theta=None) -> float:
    """Cociente de la condición integral (columna de Lipschitz unilateral) en (x, y)."""
    _check_table_spec(spec)
    x = _as_point(f, x)
    y = _as_point(f, y)
    spec.check_dim(f.dim)
    d = _nonzero(x - y, "x - y")
    g = f.evaluate(x, theta) - f.evaluate(y, theta)
    return float(table_quotients(spec, d, g)[0])


def differential_condition_residual(f: VectorFieldSpec, spec: NormSpec, x, v, theta=None) -> float:
    """Cociente de la condición diferencial (tipo Demidovich) en x a lo largo de v."""
    _check_table_spec(spec)
    spec.check_dim(f.dim)
    v = _nonzero(v, "direction v")
    J = jacobian_at(f, x, theta)
    return float(table_quotients(spec, v, J @ v)[0])


def probe_directions(spec: NormSpec, J: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Direcciones de prueba para el supremo de los cocientes.

    Incluye puntos extremos de la bola unitaria orientados por J (vectores de
    signo por fila para ℓ∞, vértices ±eⱼ desplazados hacia el signo de la
    columna para ℓ1) más direcciones aleatorias.
    """
    n = J.shape[0]
    kind = spec.base_kind
    Jb = spec.to_base_matrix(J)
    structured: List[np.ndarray] = []
    if kind == NormKind.LINF:
        for i in range(n):
            s = np.where(Jb[i] >= 0.0, 1.0, -1.0)
            s[i] = 1.0
            structured.append(s)
    elif kind == NormKind.L1:
        for j in range(n):
            s = np.where(Jb[:, j] >= 0.0, 1.0, -1.0)
            s[j] = 0.0
            v = config.L1_PROBE_EPS * s
            v[j] = 1.0
            structured.append(v)
    else:
        S = 0.5 * (Jb + Jb.T)
        structured.append(np.linalg.eigh(S)[1][:, -1])
    Z = np.vstack(structured + [rng.standard_normal((count, n))])
    return spec.from_base_rows(Z)


def _polish_rayleigh(quotient: Callable[[np.ndarray], float], v0: np.ndarray) -> float:
    """Maximiza localmente un cociente homogéneo de grado 0 a partir de v0."""
    res = minimize(lambda v: -quotient(v) if np.any(v != 0.0) else 0.0, v0, method="BFGS")
    return float(-res.fun) if np.isfinite(res.fun) else -np.inf


def sampled_differential_sup(
    f: VectorFieldSpec,
    spec: NormSpec,
    sampler: Optional[Sampler] = None,
    directions: int = config.PROBE_DIRECTIONS,
    seed: int = config.DEFAULT_SEED,
) -> SampledBound:
    """sup muestreado sobre (x, v) del cociente de la condición diferencial."""
    _check_table_spec(spec)
    spec.check_dim(f.dim)

    def _pointwise(x: np.ndarray, th: Optional[np.ndarray]) -> float:
        J = jacobian_at(f, x, th)
        rng = np.random.default_rng(seed)
        V = probe_directions(spec, J, directions, rng)
        q = table_quotients(spec, V, V @ J.T)
        best = float(np.max(q))
        if spec.base_kind == NormKind.L2:
            v0 = V[int(np.argmax(q))]
            best = max(best, _polish_rayleigh(lambda v: float(table_quotients(spec, v, J @ v)[0]), v0))
        return best

    return _sampled_sup(f, sampler, _pointwise)


def sampled_pair_sup(
    f: VectorFieldSpec,
    spec: NormSpec,
    sampler: Optional[Sampler] = None,
    pairs: int = config.PAIR_COUNT,
    short_pairs: int = config.SHORT_PAIR_COUNT,
    seed: int = config.DEFAULT_SEED,
    theta=None,
) -> SampledBound:
    """
    sup muestreado del cociente de la condición integral.

    Pares: `pairs` independientes en la caja, `short_pairs` a distancia
    ≈ 1e-3·diámetro, y pares estructurados alrededor de puntos del sampler en
    las direcciones de probe_directions. En la familia ℓ2 el mejor par se pule
    con una maximización local sobre la dirección.
    """
    _check_table_spec(spec)
    spec.check_dim(f.dim)
    box = f.domain
    rng = np.random.default_rng(seed)
    n = f.dim
    short_len = config.SHORT_PAIR_SCALE * box.diameter

    X = [rng.uniform(box.lo, box.hi, size=(pairs, n))]
    Y = [rng.uniform(box.lo, box.hi, size=(pairs, n))]

    base = rng.uniform(box.lo, box.hi, size=(short_pairs, n))
    step = rng.standard_normal((short_pairs, n))
    step *= (short_len / np.linalg.norm(step, axis=1))[:, None]
    X.append(base)
    Y.append(np.clip(base + step, box.lo, box.hi))

    centers = (sampler or default_sampler(n)).points(box)
    if centers.shape[0] > config.STRUCTURED_PAIR_POINTS:
        centers = centers[rng.choice(centers.shape[0], config.STRUCTURED_PAIR_POINTS, replace=False)]
    for c in centers:
        V = probe_directions(spec, jacobian_at(f, c, theta), 0, rng)
        for v in V:
            half = 0.5 * short_len * v / np.linalg.norm(v)
            while not (box.contains(c + half) and box.contains(c - half)) and np.linalg.norm(half) > 1e-14:
                half *= 0.5
            X.append((c + half)[None, :])
            Y.append((c - half)[None, :])

    X = np.vstack(X)
    Y = np.vstack(Y)
    keep = np.any(X != Y, axis=1)
    X, Y = X[keep], Y[keep]
    if X.shape[0] == 0:
        raise ValueError("empty sample set")

    FX = np.array([f.evaluate(x, theta) for x in X])
    FY = np.array([f.evaluate(y, theta) for y in Y])
    q = table_quotients(spec, X - Y, FX - FY)
    idx = int(np.argmax(q))
    best = float(q[idx])

    if spec.base_kind == NormKind.L2:
        mid = 0.5 * (X[idx] + Y[idx])
        length = float(np.linalg.norm(X[idx] - Y[idx]))

        def _pair_q(v: np.ndarray) -> float:
            half = 0.5 * length * v / np.linalg.norm(v)
            a, b = box.clip(mid + half), box.clip(mid - half)
            if not np.any(a != b):
                return -np.inf
            return float(table_quotients(spec, a - b, f.evaluate(a, theta) - f.evaluate(b, theta))[0])

        best = max(best, _polish_rayleigh(_pair_q, X[idx] - Y[idx]))

    return SampledBound(value=best, argmax=X[idx].copy(), samples=int(X.shape[0]), domain=box)
