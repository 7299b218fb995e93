"""
Contractividad de redes mediante matrices de ganancia.

Continuo: Γ tiene diagonal −cᵢ y fuera de ella ℓᵢⱼ ≥ 0; si Γ es Hurwitz la
red contrae con tasa |α(Γ)|. Discreto: Γ ≥ 0 con factores en la diagonal; si
ρ(Γ) < 1 la red contrae con factor ρ(Γ).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from contraction_cert.services.certificates import metzler_linf_certificate
from contraction_cert.services.norms import NormSpec, log_norm, mixed_operator_norm, spectral_summary, vector_norm
from contraction_cert.services.system_model import Sampler, VectorFieldSpec, jacobian_at, sample_states
from contraction_cert.utils.errors import DimensionError, InvalidModelError, NotHurwitzError
from contraction_cert.utils.parallel import map_items

logger = logging.getLogger(__name__)


class GainMode(str, Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(eq=False)
class GainMatrix:
    entries: np.ndarray
    block_dims: Tuple[int, ...]
    mode: GainMode = GainMode.CONTINUOUS

    def __post_init__(self):
        self.mode = GainMode(self.mode)
        G = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if G.shape[0] != G.shape[1]:
            raise DimensionError(f"gain matrix must be square, got shape {G.shape}")
        k = G.shape[0]
        dims = tuple(int(d) for d in self.block_dims) if self.block_dims else (1,) * k
        if len(dims) != k or any(d < 1 for d in dims):
            raise DimensionError(f"block_dims {dims} do not match a {k}x{k} gain matrix")
        off = G - np.diag(np.diag(G))
        if np.any(off < 0.0):
            raise InvalidModelError("cross gains must be nonnegative")
        if self.mode == GainMode.CONTINUOUS and np.any(np.diag(G) >= 0.0):
            raise InvalidModelError("continuous gain matrix requires a negative diagonal (-c_i with c_i > 0)")
        if self.mode == GainMode.DISCRETE and np.any(np.diag(G) < 0.0):
            raise InvalidModelError("discrete gain matrix must be entrywise nonnegative")
        self.entries = G
        self.block_dims = dims

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> Dict[str, Any]:
        return {"entries": self.entries.tolist(), "block_dims": list(self.block_dims), "mode": self.mode.value}


def _gain_table(gains, k: int) -> np.ndarray:
    if isinstance(gains, dict):
        table = np.zeros((k, k))
        for (i, j), value in gains.items():
            table[int(i), int(j)] = float(value)
        return table
    if gains is None:
        return np.zeros((k, k))
    table = np.atleast_2d(np.asarray(gains, dtype=float))
    if table.shape != (k, k):
        raise DimensionError(f"gain table has shape {table.shape}, expected {(k, k)}")
    return table


def build_gain_matrix(
    rates: Sequence[float],
    gains,
    mode: str = GainMode.CONTINUOUS,
    block_dims: Optional[Sequence[int]] = None,
) -> GainMatrix:
    """
    Ensambla Γ. En modo continuo rates son las tasas cᵢ > 0; en modo discreto
    son los factores de contracción de cada subsistema (≥ 0). ℓᵢᵢ se ignora.
    """
    mode = GainMode(mode)
    c = np.asarray(rates, dtype=float).reshape(-1)
    k = c.shape[0]
    if k == 0:
        raise DimensionError("at least one subsystem is required")
    if mode == GainMode.CONTINUOUS and np.any(c <= 0.0):
        raise InvalidModelError("subsystem rates must be > 0")
    if mode == GainMode.DISCRETE and np.any(c < 0.0):
        raise InvalidModelError("subsystem factors must be >= 0")
    table = _gain_table(gains, k)
    off = table - np.diag(np.diag(table))
    if np.any(off < 0.0):
        raise InvalidModelError("cross gains must be nonnegative")
    diag = -c if mode == GainMode.CONTINUOUS else c
    return GainMatrix(entries=off + np.diag(diag), block_dims=tuple(block_dims or (1,) * k), mode=mode)


def network_rate(G: GainMatrix) -> Optional[float]:
    """|α(Γ)| si Γ es Hurwitz (continuo); ρ(Γ) si Γ es Schur (discreto); None si no."""
    summary = spectral_summary(G.entries)
    if G.mode == GainMode.CONTINUOUS:
        return -summary.alpha if summary.alpha < 0.0 else None
    return summary.rho if summary.rho < 1.0 else None


@dataclass
class NetworkCertificate:
    """
    Tasa (o factor) de la red y el peso η de la norma compuesta
    ‖x‖ = maxᵢ ‖xᵢ‖ᵢ/ηᵢ, una elección válida entre varias.
    """

    mode: GainMode
    eta: np.ndarray
    block_dims: Tuple[int, ...]
    rate: Optional[float] = None
    factor: Optional[float] = None
    margin: float = 0.0

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "mode": self.mode.value,
            "eta": self.eta.tolist(),
            "block_dims": list(self.block_dims),
            "composite_norm": "max_i ||x_i||_i / eta_i",
            "margin": self.margin,
        }
        if self.rate is not None:
            data["rate"] = self.rate
        else:
            data["factor"] = self.factor
        return data


def network_certificate(G: GainMatrix) -> Optional[NetworkCertificate]:
    """
    Certificado de Metzler de Γ (o de Γ − I en modo discreto) para la norma
    compuesta ponderada por η.
    """
    if network_rate(G) is None:
        return None
    if G.mode == GainMode.CONTINUOUS:
        cert = metzler_linf_certificate(G.entries)
        return NetworkCertificate(
            mode=G.mode, eta=cert.witness["eta"], block_dims=G.block_dims, rate=cert.rate, margin=cert.margin
        )
    try:
        cert = metzler_linf_certificate(G.entries - np.eye(G.size))
    except NotHurwitzError:
        return None
    eta = cert.witness["eta"]
    factor = float(np.max((G.entries @ eta) / eta))
    if factor >= 1.0:
        return None
    return NetworkCertificate(
        mode=G.mode, eta=eta, block_dims=G.block_dims, factor=factor, margin=1.0 - factor
    )


def block_slices(block_dims: Sequence[int]) -> List[slice]:
    edges = np.concatenate([[0], np.cumsum(block_dims)]).astype(int)
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def composite_norm(x, block_dims: Sequence[int], specs: Sequence[NormSpec], eta) -> float:
    """maxᵢ ‖xᵢ‖ᵢ/ηᵢ."""
    x = np.asarray(x, dtype=float).reshape(-1)
    eta = np.asarray(eta, dtype=float).reshape(-1)
    return float(max(vector_norm(x[s], spec) / e for s, spec, e in zip(block_slices(block_dims), specs, eta)))


def split_field(f: VectorFieldSpec, block_dims: Sequence[int]) -> List[VectorFieldSpec]:
    """Parte un campo monolítico en campos por bloque Fᵢ: Rⁿ → R^{nᵢ}."""
    if sum(block_dims) != f.dim:
        raise DimensionError(f"partition {tuple(block_dims)} does not sum to state dimension {f.dim}")
    parts: List[VectorFieldSpec] = []
    for i, s in enumerate(block_slices(block_dims)):
        parts.append(
            VectorFieldSpec(
                evaluator=lambda x, s=s: f.evaluate(x)[s],
                jacobian=lambda x, s=s: jacobian_at(f, x)[s, :],
                domain=f.domain,
                name=f"{f.name}[{i}]",
            )
        )
    return parts


def subsystem_gains_from_fields(
    fields: Sequence[VectorFieldSpec],
    block_dims: Sequence[int],
    specs: Sequence[NormSpec],
    sampler: Optional[Sampler] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    cᵢ = −sup μᵢ(∂Fᵢ/∂xᵢ) y ℓᵢⱼ = sup ‖∂Fᵢ/∂xⱼ‖_{j→i}, ambos muestreados
    sobre la caja de cada campo (cotas de muestreo, no certificados).
    """
    k = len(block_dims)
    if len(fields) != k or len(specs) != k:
        raise DimensionError(f"partition mismatch: {len(fields)} fields, {len(specs)} norms, {k} blocks")
    n = int(sum(block_dims))
    slices = block_slices(block_dims)

    def _block(i: int) -> Tuple[float, np.ndarray]:
        f = fields[i]
        if f.dim != n:
            raise DimensionError(f"{f.name}: field state dimension {f.dim} does not match partition total {n}")
        X, _ = sample_states(f, sampler)
        osl = -np.inf
        row = np.zeros(k)
        for x in X:
            J = jacobian_at(f, x)
            if J.shape != (block_dims[i], n):
                raise DimensionError(f"{f.name}: Jacobian has shape {J.shape}, expected {(block_dims[i], n)}")
            osl = max(osl, log_norm(J[:, slices[i]], specs[i]))
            for j in range(k):
                if j != i:
                    row[j] = max(row[j], mixed_operator_norm(J[:, slices[j]], specs[i], specs[j]))
        return -osl, row

    results = map_items(_block, range(k))
    rates = np.array([r for r, _ in results])
    gains = np.vstack([row for _, row in results])
    for i, c in enumerate(rates):
        if c <= 0.0:
            logger.warning(f"Subsystem {i} is not contracting in its own coordinates (c = {c:.4g})")
    return rates, gains
