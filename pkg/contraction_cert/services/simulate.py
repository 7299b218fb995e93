"""
Integración RK4 de paso fijo y verificación empírica de las cotas garantizadas:
estabilidad incremental, ISS incremental y seguimiento de equilibrio.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from contraction_cert.services.discretization import banach_iterate, euler_map, find_contracting_step
from contraction_cert.services.norms import NormSpec, vector_norm
from contraction_cert.services.system_model import VectorFieldSpec
from contraction_cert.utils import config
from contraction_cert.utils.errors import DimensionError, FixedPointError, IntegrationBlowUp
from contraction_cert.utils.parallel import map_items
from contraction_cert.utils.run_metrics import get_run_metrics

logger = logging.getLogger(__name__)


# =========================
# Tipos
# =========================

@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.shape[0]:
            raise DimensionError("trajectory needs one state per time")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.inputs is not None:
            self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
            if self.inputs.shape[0] != self.times.shape[0]:
                raise DimensionError("trajectory needs one input sample per time")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def distances_to(self, other: "Trajectory", spec: NormSpec) -> np.ndarray:
        if other.states.shape != self.states.shape:
            raise DimensionError("trajectories are not on the same grid")
        return np.array([vector_norm(d, spec) for d in self.states - other.states])

    def to_csv(self) -> str:
        """Columnas t, x_1..x_n[, theta_1..theta_p]."""
        n = self.states.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(n)]
        if self.inputs is not None:
            header += [f"theta_{i + 1}" for i in range(self.inputs.shape[1])]
        sio = io.StringIO()
        writer = csv.writer(sio, lineterminator="\n")
        writer.writerow(header)
        for k, t in enumerate(self.times):
            row = [repr(float(t))] + [repr(float(v)) for v in self.states[k]]
            if self.inputs is not None:
                row += [repr(float(v)) for v in self.inputs[k]]
            writer.writerow(row)
        return sio.getvalue()


class SignalKind(str, Enum):
    CONSTANT = "constant"
    SINUSOID = "sinusoid"
    PIECEWISE_LINEAR = "piecewise_linear"
    CUSTOM = "custom"


@dataclass(eq=False)
class Signal:
    """
    Señal de entrada θ(t).

    sinusoid: offset + amplitude·sin(frequency·t + phase), frequency en rad/s.
    piecewise_linear: interpolación entre nudos, constante fuera de ellos.
    """

    kind: SignalKind
    params: Dict[str, Any] = field(default_factory=dict)
    fn: Optional[Callable[[float], Any]] = None
    dfn: Optional[Callable[[float], Any]] = None

    @classmethod
    def constant(cls, v) -> "Signal":
        return cls(SignalKind.CONSTANT, {"value": np.atleast_1d(np.asarray(v, dtype=float))})

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase=0.0, offset=0.0) -> "Signal":
        arrays = np.broadcast_arrays(*[np.atleast_1d(np.asarray(v, dtype=float)) for v in (amplitude, frequency, phase, offset)])
        return cls(
            SignalKind.SINUSOID,
            {"amplitude": arrays[0], "frequency": arrays[1], "phase": arrays[2], "offset": arrays[3]},
        )

    @classmethod
    def piecewise_linear(cls, times, values) -> "Signal":
        t = np.asarray(times, dtype=float).reshape(-1)
        v = np.asarray(values, dtype=float)
        v = v.reshape(t.shape[0], -1)
        if t.shape[0] < 2 or np.any(np.diff(t) <= 0.0):
            raise ValueError("piecewise linear signal needs at least two strictly increasing knots")
        return cls(SignalKind.PIECEWISE_LINEAR, {"times": t, "values": v})

    @classmethod
    def custom(cls, fn: Callable[[float], Any], dfn: Optional[Callable[[float], Any]] = None) -> "Signal":
        return cls(SignalKind.CUSTOM, {}, fn=fn, dfn=dfn)

    def value(self, t: float) -> np.ndarray:
        p = self.params
        if self.kind == SignalKind.CONSTANT:
            return p["value"].copy()
        if self.kind == SignalKind.SINUSOID:
            return p["offset"] + p["amplitude"] * np.sin(p["frequency"] * t + p["phase"])
        if self.kind == SignalKind.PIECEWISE_LINEAR:
            return np.array([np.interp(t, p["times"], p["values"][:, j]) for j in range(p["values"].shape[1])])
        return np.atleast_1d(np.asarray(self.fn(t), dtype=float))

    def derivative(self, t: float) -> np.ndarray:
        p = self.params
        if self.kind == SignalKind.CONSTANT:
            return np.zeros_like(p["value"])
        if self.kind == SignalKind.SINUSOID:
            return p["amplitude"] * p["frequency"] * np.cos(p["frequency"] * t + p["phase"])
        if self.kind == SignalKind.PIECEWISE_LINEAR:
            knots, values = p["times"], p["values"]
            if t < knots[0] or t >= knots[-1]:
                return np.zeros(values.shape[1])
            k = int(np.searchsorted(knots, t, side="right")) - 1
            return (values[k + 1] - values[k]) / (knots[k + 1] - knots[k])
        if self.dfn is not None:
            return np.atleast_1d(np.asarray(self.dfn(t), dtype=float))
        h = config.FD_REL_STEP * (1.0 + abs(t))
        return (self.value(t + h) - self.value(t - h)) / (2.0 * h)

    def to_json(self) -> Dict[str, Any]:
        if self.kind == SignalKind.CUSTOM:
            raise ValueError("custom signals are not serializable")
        return {"kind": self.kind.value, **{k: np.asarray(v).tolist() for k, v in self.params.items()}}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Signal":
        kind = SignalKind(str(data.get("kind", "")).strip().lower())
        if kind == SignalKind.CONSTANT:
            return cls.constant(data["value"])
        if kind == SignalKind.SINUSOID:
            return cls.sinusoid(
                data["amplitude"], data["frequency"], data.get("phase", 0.0), data.get("offset", 0.0)
            )
        if kind == SignalKind.PIECEWISE_LINEAR:
            return cls.piecewise_linear(data["times"], data["values"])
        raise ValueError("custom signals cannot be built from JSON")


def default_dt(rate: Optional[float] = None) -> float:
    """min(1e-3, 0.1/|rate|)."""
    if rate is None or rate == 0.0:
        return config.DEFAULT_DT
    return min(config.DEFAULT_DT, 0.1 / abs(rate))


# =========================
# Integración
# =========================

def time_grid(t_span: Tuple[float, float], dt: float) -> np.ndarray:
    t0, t1 = float(t_span[0]), float(t_span[1])
    span = t1 - t0
    if not span > 0.0:
        raise ValueError("t_span must satisfy t0 < t1")
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    if dt > span / 10.0 * (1.0 + 1e-12):
        raise ValueError(f"dt={dt:g} is too large for a span of {span:g} (need dt <= span/10)")
    steps = max(10, int(math.ceil(span / dt - 1e-9)))
    return np.linspace(t0, t1, steps + 1)


def integrate(
    f: VectorFieldSpec,
    x0,
    t_span: Tuple[float, float],
    dt: float,
    input: Optional[Signal] = None,
) -> Trajectory:
    """
    RK4 de paso fijo sobre una grilla uniforme que termina exactamente en t1.

    Raises:
        IntegrationBlowUp: si el estado deja de ser finito (con el tiempo de falla)
    """
    if input is not None and not f.parametric:
        raise ValueError(f"{f.name}: input signal given for a field without a parameter channel")
    times = time_grid(t_span, dt)
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.shape[0] != f.dim:
        raise DimensionError(f"{f.name}: initial state has dimension {x.shape[0]}, field has {f.dim}")

    def theta(t: float) -> Optional[np.ndarray]:
        return input.value(t) if input is not None else None

    states = np.empty((times.shape[0], f.dim))
    states[0] = x
    for k in range(times.shape[0] - 1):
        t, h = times[k], times[k + 1] - times[k]
        th_mid = theta(t + 0.5 * h)
        k1 = f.evaluate(x, theta(t))
        k2 = f.evaluate(x + 0.5 * h * k1, th_mid)
        k3 = f.evaluate(x + 0.5 * h * k2, th_mid)
        k4 = f.evaluate(x + h * k3, theta(t + h))
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationBlowUp(f"{f.name}: state became non-finite at t={times[k + 1]:.6g}", time=float(times[k + 1]))
        states[k + 1] = x
    get_run_metrics().increment_counter("integration_steps", times.shape[0] - 1)

    inputs = np.array([input.value(t) for t in times]) if input is not None else None
    return Trajectory(times=times, states=states, inputs=inputs)


def endpoint_convergence_ratio(
    f: VectorFieldSpec,
    x0,
    t_span: Tuple[float, float],
    dt: float,
    exact=None,
    input: Optional[Signal] = None,
) -> float:
    """
    Cociente entre los errores finales con dt y dt/2 (≈ 16 para RK4). Sin
    solución exacta se usa una corrida con dt/8 como referencia.
    """
    coarse = integrate(f, x0, t_span, dt, input).final
    fine = integrate(f, x0, t_span, dt / 2.0, input).final
    ref = np.asarray(exact, dtype=float) if exact is not None else integrate(f, x0, t_span, dt / 8.0, input).final
    err_coarse = float(np.linalg.norm(coarse - ref))
    err_fine = float(np.linalg.norm(fine - ref))
    return err_coarse / err_fine if err_fine > 0.0 else math.inf


# =========================
# Cotas
# =========================

@dataclass
class BoundCheck:
    """Máxima violación de una cota a lo largo de la grilla; passes si ≤ tol·max(1, sup cota)."""

    max_violation: float
    passes: bool
    tol: float
    t_worst: float
    details: Dict[str, Any] = field(default_factory=dict)
    trajectories: List[Trajectory] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return {
            "max_violation": self.max_violation,
            "passes": self.passes,
            "tol": self.tol,
            "t_worst": self.t_worst,
            **self.details,
        }


def _incremental_bound(
    times: np.ndarray,
    d0: float,
    c: float,
    gain: float,
    drive_sup: np.ndarray,
) -> np.ndarray:
    """e^{−c(t−t0)}·d0 + gain·(1 − e^{−c(t−t0)})·sup_{τ≤t} drive(τ)."""
    decay = np.exp(-c * (times - times[0]))
    return decay * d0 + gain * (1.0 - decay) * drive_sup


def _violation(times: np.ndarray, observed: np.ndarray, bound: np.ndarray, tol: float, details: Dict[str, Any]) -> BoundCheck:
    gap = observed - bound
    idx = int(np.argmax(gap))
    worst = float(gap[idx])
    # tol es absoluta hasta magnitud 1 y relativa por encima (pesos muy desbalanceados)
    allowed = tol * max(1.0, float(np.max(np.abs(bound))))
    return BoundCheck(max_violation=worst, passes=worst <= allowed, tol=tol, t_worst=float(times[idx]), details=details)


def _input_gap_sup(tx: Trajectory, ty: Trajectory, theta_spec: NormSpec) -> np.ndarray:
    gaps = np.array([vector_norm(d, theta_spec) for d in tx.inputs - ty.inputs])
    return np.maximum.accumulate(gaps)


def _theta_spec_for(spec: NormSpec, p: int, theta_spec: Optional[NormSpec]) -> NormSpec:
    if theta_spec is not None:
        return theta_spec
    if spec.dim is None or spec.dim == p:
        return spec
    return NormSpec(spec.base_kind)


def incremental_stability_check(
    f: VectorFieldSpec,
    spec: NormSpec,
    c: float,
    x0,
    y0,
    t_span: Tuple[float, float],
    dt: float,
    tol: float = 1e-6,
    input: Optional[Signal] = None,
) -> BoundCheck:
    """‖x(t) − y(t)‖ ≤ e^{−ct}‖x0 − y0‖ sobre la grilla (misma entrada para ambas)."""
    tx = integrate(f, x0, t_span, dt, input)
    ty = integrate(f, y0, t_span, dt, input)
    return _incremental_check_on(tx, ty, spec, c, tol)


def _incremental_check_on(tx: Trajectory, ty: Trajectory, spec: NormSpec, c: float, tol: float) -> BoundCheck:
    dist = tx.distances_to(ty, spec)
    bound = _incremental_bound(tx.times, float(dist[0]), float(c), 0.0, np.zeros_like(dist))
    check = _violation(tx.times, dist, bound, tol, {"check": "incremental", "rate": float(c), "d0": float(dist[0])})
    check.trajectories = [tx, ty]
    return check


def verify_iiss_bound(
    f: VectorFieldSpec,
    spec: NormSpec,
    c: float,
    ell: float,
    x0,
    y0,
    theta_x: Signal,
    theta_y: Signal,
    t_span: Tuple[float, float],
    dt: float,
    tol: float = 1e-6,
    theta_spec: Optional[NormSpec] = None,
) -> BoundCheck:
    """
    ‖x − y‖ ≤ e^{−ct}‖x0 − y0‖ + (ℓ/c)(1 − e^{−ct})·sup_{τ≤t}‖θx − θy‖.

    El supremo se toma sobre la misma grilla de las trayectorias.
    """
    c, ell = float(c), float(ell)
    if not c > 0.0:
        raise ValueError("rate c must be > 0")
    if ell < 0.0:
        raise ValueError("ell must be >= 0")
    tx = integrate(f, x0, t_span, dt, theta_x)
    ty = integrate(f, y0, t_span, dt, theta_y)
    return _iiss_check_on(tx, ty, spec, c, ell, tol, theta_spec)


def _iiss_check_on(
    tx: Trajectory,
    ty: Trajectory,
    spec: NormSpec,
    c: float,
    ell: float,
    tol: float,
    theta_spec: Optional[NormSpec] = None,
) -> BoundCheck:
    dist = tx.distances_to(ty, spec)
    th_spec = _theta_spec_for(spec, tx.inputs.shape[1], theta_spec)
    drive = _input_gap_sup(tx, ty, th_spec)
    bound = _incremental_bound(tx.times, float(dist[0]), c, ell / c, drive)
    check = _violation(
        tx.times,
        dist,
        bound,
        tol,
        {"check": "iiss", "rate": c, "ell": ell, "d0": float(dist[0]), "input_gap_sup": float(drive[-1])},
    )
    check.trajectories = [tx, ty]
    return check


def solve_frozen_equilibria(
    f: VectorFieldSpec,
    spec: NormSpec,
    thetas: Sequence[np.ndarray],
    x_start,
    alpha: Optional[float] = None,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    factor: Optional[float] = None,
) -> np.ndarray:
    """
    x*(θ) para cada θ por iteración de Banach sobre el mapa de Euler con θ fijo;
    arranque en caliente, por eso las resoluciones van en secuencia.
    """
    if alpha is None:
        step = find_contracting_step(f, spec)
        if step is None:
            raise FixedPointError(f"{f.name}: no contracting Euler step for the frozen dynamics")
        alpha = step.alpha
    mapping = euler_map(f, alpha)
    x = np.asarray(x_start, dtype=float).reshape(-1)
    out = []
    for th in thetas:
        result = banach_iterate(mapping, x, tol, max_iter, spec=spec, factor=factor, theta=th).require_converged()
        x = result.x_star
        out.append(x)
    return np.array(out)


def verify_equilibrium_tracking(
    f: VectorFieldSpec,
    spec: NormSpec,
    c: float,
    ell: float,
    theta: Signal,
    x0,
    t_span: Tuple[float, float],
    dt: float,
    tol: float = 1e-6,
    theta_spec: Optional[NormSpec] = None,
    alpha: Optional[float] = None,
) -> BoundCheck:
    """
    ‖x(t) − x*(θ(t))‖ ≤ e^{−ct}‖x0 − x*(θ0)‖ + (ℓ/c²)(1 − e^{−ct})·sup_{τ≤t}‖θ̇‖.

    x*(θ(t)) se resuelve cada 10 pasos de integración y se interpola
    linealmente; details incluye el error asintótico (último 25% del
    horizonte) y su cota (ℓ/c²)·sup‖θ̇‖.
    """
    c, ell = float(c), float(ell)
    if not c > 0.0:
        raise ValueError("rate c must be > 0")
    traj = integrate(f, x0, t_span, dt, theta)
    times = traj.times
    idx = np.unique(np.concatenate([np.arange(0, times.shape[0], config.FIXED_POINT_SOLVE_EVERY), [times.shape[0] - 1]]))
    eq = solve_frozen_equilibria(f, spec, [theta.value(times[i]) for i in idx], traj.states[0], alpha=alpha)
    x_star = np.column_stack([np.interp(times, times[idx], eq[:, j]) for j in range(f.dim)])

    err = np.array([vector_norm(d, spec) for d in traj.states - x_star])
    th_spec = _theta_spec_for(spec, traj.inputs.shape[1], theta_spec)
    drift = np.maximum.accumulate(np.array([vector_norm(theta.derivative(t), th_spec) for t in times]))
    bound = _incremental_bound(times, float(err[0]), c, ell / (c * c), drift)

    tail = times >= times[0] + 0.75 * (times[-1] - times[0])
    details = {
        "check": "tracking",
        "rate": c,
        "ell": ell,
        "e0": float(err[0]),
        "asymptotic_error": float(err[tail].max()),
        "asymptotic_bound": ell / (c * c) * float(drift[-1]),
    }
    check = _violation(times, err, bound, tol, details)
    check.trajectories = [traj, Trajectory(times=times, states=x_star, inputs=traj.inputs)]
    return check


# =========================
# Tasas empíricas
# =========================

@dataclass
class RateEstimate:
    """Tasa empírica (mínimo sobre pares) y verificación de no sobreimpulso."""

    rate: Optional[float]
    pair_rates: List[Optional[float]]
    underflow: bool
    no_overshoot: Optional[bool] = None
    max_overshoot: Optional[float] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "rate": self.rate,
            "pair_rates": self.pair_rates,
            "underflow": self.underflow,
            "no_overshoot": self.no_overshoot,
            "max_overshoot": self.max_overshoot,
        }


def log_slope_rate(times: np.ndarray, dist: np.ndarray) -> Optional[float]:
    mask = dist > config.DISTANCE_FLOOR
    if int(mask.sum()) < 2:
        return None
    slope, _ = np.polyfit(times[mask], np.log(dist[mask]), 1)
    return float(-slope)


def empirical_contraction_rate(
    f: VectorFieldSpec,
    spec: NormSpec,
    pairs: Sequence[Tuple[Any, Any]],
    t_span: Tuple[float, float],
    dt: float,
    certified_rate: Optional[float] = None,
    tol: float = 1e-2,
    input: Optional[Signal] = None,
) -> RateEstimate:
    """
    Pendiente por mínimos cuadrados de log‖x(t) − y(t)‖ donde la distancia
    supera 1e-10; la tasa agregada es el mínimo sobre pares. Con
    certified_rate verifica ‖x(t) − y(t)‖ ≤ e^{−ct}‖x0 − y0‖·(1 + tol).
    """
    if not pairs:
        raise ValueError("at least one pair is required")

    def _one(pair: Tuple[Any, Any]) -> Tuple[Optional[float], Optional[float]]:
        x0, y0 = (np.asarray(p, dtype=float) for p in pair)
        if not np.any(x0 != y0):
            raise ValueError("pairs must have distinct initial states")
        tx = integrate(f, x0, t_span, dt, input)
        ty = integrate(f, y0, t_span, dt, input)
        dist = tx.distances_to(ty, spec)
        overshoot = None
        if certified_rate is not None:
            envelope = np.exp(-certified_rate * (tx.times - tx.times[0])) * dist[0]
            mask = envelope > config.DISTANCE_FLOOR
            overshoot = float(np.max(dist[mask] / envelope[mask]) - 1.0) if mask.any() else 0.0
        return log_slope_rate(tx.times, dist), overshoot

    results = map_items(_one, pairs)
    pair_rates = [r for r, _ in results]
    finite = [r for r in pair_rates if r is not None]
    if not finite:
        logger.warning("Distance underflow for every pair; no empirical rate available")
    estimate = RateEstimate(rate=min(finite) if finite else None, pair_rates=pair_rates, underflow=not finite)
    if certified_rate is not None:
        worst = max(o for _, o in results)
        estimate.max_overshoot = worst
        estimate.no_overshoot = worst <= tol
    return estimate


def periodic_entrainment_check(
    f: VectorFieldSpec,
    spec: NormSpec,
    theta: Signal,
    period: float,
    x0s: Sequence[Any],
    t_span: Tuple[float, float],
    dt: float,
    tol: float = 1e-4,
) -> Dict[str, Any]:
    """
    Con entrada periódica de período T, las trayectorias de un sistema
    contractivo convergen entre sí y a una órbita de período T. Evidencia
    empírica, no certifica.
    """
    if len(x0s) < 2:
        raise ValueError("at least two initial states are required")
    if not period > 0.0 or period >= float(t_span[1]) - float(t_span[0]):
        raise ValueError("period must be positive and shorter than the time span")
    trajs = map_items(lambda x0: integrate(f, x0, t_span, dt, theta), list(x0s))
    ref = trajs[0]
    spread = max(vector_norm(t.final - ref.final, spec) for t in trajs[1:])
    t_back = ref.times[-1] - period
    past = np.array([np.interp(t_back, ref.times, ref.states[:, j]) for j in range(f.dim)])
    periodicity = vector_norm(ref.final - past, spec)
    return {
        "spread": spread,
        "periodicity_residual": periodicity,
        "entrained": bool(spread <= tol and periodicity <= tol),
        "tol": tol,
        "certified": False,
    }
