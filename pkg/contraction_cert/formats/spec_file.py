"""
Lectura y validación de archivos de especificación de sistemas (JSON).

Forma:
    {
      "schema_version": 1,
      "system": {"<kind>": {...}},
      "norm": "linf" | {"kind": "wl2", "P": [[...]]},
      "domain": {"lo": [...], "hi": [...]},
      "simulation": {"t_span": [0, 10], "dt": 1e-3, "seeds": [0], ...}
    }

Errores de parseo → SpecFileError(exit_code=2) con línea y columna.
Errores de contenido → SpecFileError(exit_code=3) con la ruta del campo.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from contraction_cert.services import models
from contraction_cert.services.interconnect import GainMatrix, GainMode, build_gain_matrix
from contraction_cert.services.norms import NormSpec
from contraction_cert.services.simulate import Signal
from contraction_cert.services.system_model import Box, VectorFieldSpec
from contraction_cert.utils import config
from contraction_cert.utils.errors import ContractionError, SpecFileError

logger = logging.getLogger(__name__)

KINDS = ("linear", "gradient_flow", "firing_rate", "lure", "implicit_nn", "competitive", "network")


# =========================
# Helpers de validación
# =========================

def _fail(path: str, message: str) -> SpecFileError:
    return SpecFileError(f"{path}: {message}", exit_code=3, field=path)


def _require(block: Dict[str, Any], key: str, path: str) -> Any:
    if key not in block or block[key] is None:
        raise _fail(f"{path}.{key}", "missing required field")
    return block[key]


def _matrix(value: Any, path: str) -> np.ndarray:
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise _fail(path, "expected a numeric matrix")
    if M.ndim == 1 and M.size == 1:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.size == 0:
        raise _fail(path, f"expected a non-empty 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise _fail(path, "matrix entries must be finite")
    return M


def _vector(value: Any, path: str, n: Optional[int] = None) -> np.ndarray:
    try:
        v = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise _fail(path, "expected a numeric vector")
    if not np.all(np.isfinite(v)):
        raise _fail(path, "vector entries must be finite")
    if n is not None and v.shape[0] != n:
        raise _fail(path, f"expected length {n}, got {v.shape[0]}")
    return v


def _number(value: Any, path: str) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise _fail(path, "expected a number")
    if not np.isfinite(x):
        raise _fail(path, "expected a finite number")
    return x


def _square(value: Any, path: str, n: Optional[int] = None) -> np.ndarray:
    M = _matrix(value, path)
    if M.shape[0] != M.shape[1]:
        raise _fail(path, f"expected a square matrix, got shape {M.shape}")
    if n is not None and M.shape[0] != n:
        raise _fail(path, f"expected a {n}x{n} matrix, got shape {M.shape}")
    return M


# =========================
# Tipos
# =========================

@dataclass
class SimulationBlock:
    t_span: Tuple[float, float] = (0.0, 10.0)
    dt: Optional[float] = None
    seeds: List[int] = field(default_factory=lambda: [config.DEFAULT_SEED])
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    pairs: int = 1
    input: Optional[Signal] = None
    input_y: Optional[Signal] = None
    rate: Optional[float] = None
    ell: Optional[float] = None


@dataclass
class SystemSpecFile:
    kind: str
    params: Dict[str, Any]
    norm: Optional[NormSpec] = None
    domain: Optional[Box] = None
    simulation: Optional[SimulationBlock] = None
    source: str = "<memory>"

    @property
    def is_network(self) -> bool:
        return self.kind == "network"

    def norm_or_default(self) -> NormSpec:
        if self.norm is not None:
            return self.norm
        return NormSpec.linf() if self.kind in ("firing_rate", "implicit_nn", "competitive") else NormSpec.l2()

    def build_field(self, parametric: bool = False) -> VectorFieldSpec:
        """
        Construye el campo del sistema. Con parametric=True los modelos que lo
        admiten (linear, firing_rate) exponen su término de entrada como θ.
        """
        p = self.params
        path = f"system.{self.kind}"
        try:
            if self.kind == "linear":
                f = models.linear_field(p["A"], p.get("a"), self.domain)
                if parametric:
                    return _affine_input_field(p["A"], self.domain or f.domain, p.get("input_domain"))
                return f
            if self.kind == "gradient_flow":
                if "Q" in p:
                    return models.quadratic_gradient_field(p["Q"], p.get("q"), self.domain)
                if "double_well" in p:
                    return models.double_well_gradient_field(p["double_well"], self.domain)
                return models.logistic_gradient_field(p["features"], p["labels"], p["reg"], self.domain)
            if self.kind == "firing_rate":
                spec = self.firing_rate_spec()
                input_domain = p.get("input_domain") if parametric else None
                if parametric and input_domain is None:
                    input_domain = Box(spec.u - 1.0, spec.u + 1.0)
                return models.firing_rate_field(spec, self.domain, input_domain)
            if self.kind == "lure":
                return models.lure_field(self.lure_spec(), self.domain, p.get("activation", "relu"))
            if self.kind == "implicit_nn":
                spec = self.implicit_nn_spec()
                return models.implicit_nn_field(spec, p.get("u", np.zeros(spec.m)), self.domain)
            if self.kind == "competitive":
                return models.competitive_field(p["Phi"], p["u"], p["lambda"], self.domain)
        except SpecFileError:
            raise
        except ContractionError as e:
            raise _fail(path, str(e)) from e
        raise _fail(path, "network specs carry no state dynamics")

    def firing_rate_spec(self) -> models.FiringRateSpec:
        p = self.params
        try:
            act = models.make_activation(p.get("activation", "tanh"), p.get("d1"), p.get("d2"))
            return models.FiringRateSpec(C=p["C"], A=p["A"], u=p["u"], activation=act)
        except ContractionError as e:
            raise _fail("system.firing_rate", str(e)) from e

    def lure_spec(self) -> models.LureSpec:
        p = self.params
        try:
            return models.LureSpec(A=p["A"], B=p["B"], C_out=p["C"], rho=p["rho"], eta_rate=p["eta_rate"])
        except ContractionError as e:
            raise _fail("system.lure", str(e)) from e

    def implicit_nn_spec(self) -> models.ImplicitNNSpec:
        p = self.params
        try:
            return models.ImplicitNNSpec(A=p["A"], B=p["B"], b=p["b"], activation=models.make_activation("relu"))
        except ContractionError as e:
            raise _fail("system.implicit_nn", str(e)) from e

    def gain_matrix(self) -> GainMatrix:
        p = self.params
        try:
            return build_gain_matrix(p["rates"], p["gains"], p["mode"], p["block_dims"])
        except ContractionError as e:
            raise _fail("system.network", str(e)) from e


def _affine_input_field(A, domain: Box, input_domain: Optional[Box]) -> VectorFieldSpec:
    """ẋ = Ax + θ; Lip_θ = 1 en cualquier norma."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    return VectorFieldSpec(
        evaluator=lambda x, th: A @ x + th,
        jacobian=lambda x, th: A,
        theta_jacobian=lambda x, th: eye,
        domain=domain,
        parameter_domain=input_domain or Box.symmetric(1.0, n),
        name="linear_input",
    )


# =========================
# Parseo por tipo de sistema
# =========================

def _parse_linear(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    A = _square(_require(block, "A", path), f"{path}.A")
    n = A.shape[0]
    out: Dict[str, Any] = {"A": A, "n": n}
    if block.get("a") is not None:
        out["a"] = _vector(block["a"], f"{path}.a", n)
    if block.get("input_domain") is not None:
        out["input_domain"] = _box(block["input_domain"], f"{path}.input_domain", n)
    return out


def _parse_gradient_flow(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    if block.get("Q") is not None:
        Q = _square(block["Q"], f"{path}.Q")
        out: Dict[str, Any] = {"Q": Q, "n": Q.shape[0]}
        if block.get("q") is not None:
            out["q"] = _vector(block["q"], f"{path}.q", Q.shape[0])
        return out
    if block.get("double_well") is not None:
        a = _vector(block["double_well"], f"{path}.double_well")
        return {"double_well": a, "n": a.shape[0]}
    if block.get("features") is None:
        raise _fail(
            path, "expected one of 'Q' (quadratic), 'double_well' or 'features'/'labels'/'reg' (logistic)"
        )
    X = _matrix(block["features"], f"{path}.features")
    y = _vector(_require(block, "labels", path), f"{path}.labels", X.shape[0])
    reg = _number(_require(block, "reg", path), f"{path}.reg")
    return {"features": X, "labels": y, "reg": reg, "n": X.shape[1]}


def _parse_firing_rate(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    A = _square(_require(block, "A", path), f"{path}.A")
    n = A.shape[0]
    C = _square(block.get("C", np.eye(n).tolist()), f"{path}.C", n)
    u = _vector(block.get("u", [0.0] * n), f"{path}.u", n)
    out: Dict[str, Any] = {"A": A, "C": C, "u": u, "n": n, "activation": str(block.get("activation", "tanh"))}
    for key in ("d1", "d2"):
        if block.get(key) is not None:
            out[key] = _number(block[key], f"{path}.{key}")
    if out["activation"] not in models.ACTIVATIONS:
        raise _fail(f"{path}.activation", f"unknown activation '{out['activation']}'")
    if block.get("input_domain") is not None:
        out["input_domain"] = _box(block["input_domain"], f"{path}.input_domain", n)
    return out


def _parse_lure(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    A = _square(_require(block, "A", path), f"{path}.A")
    n = A.shape[0]
    B = _matrix(_require(block, "B", path), f"{path}.B")
    if B.shape[0] != n and B.shape == (1, n):
        B = B.T
    if B.shape[0] != n:
        raise _fail(f"{path}.B", f"expected {n} rows, got shape {B.shape}")
    m = B.shape[1]
    C = _matrix(_require(block, "C", path), f"{path}.C")
    if C.shape != (m, n):
        raise _fail(f"{path}.C", f"expected shape {(m, n)}, got {C.shape}")
    return {
        "A": A,
        "B": B,
        "C": C,
        "rho": _number(block.get("rho", 1.0), f"{path}.rho"),
        "eta_rate": _number(_require(block, "eta_rate", path), f"{path}.eta_rate"),
        "activation": str(block.get("activation", "relu")),
        "n": n,
    }


def _parse_implicit_nn(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    A = _square(_require(block, "A", path), f"{path}.A")
    n = A.shape[0]
    B = _matrix(block.get("B", np.zeros((n, 1)).tolist()), f"{path}.B")
    if B.shape[0] != n:
        raise _fail(f"{path}.B", f"expected {n} rows, got shape {B.shape}")
    out: Dict[str, Any] = {
        "A": A,
        "B": B,
        "b": _vector(block.get("b", [0.0] * n), f"{path}.b", n),
        "n": n,
    }
    if block.get("u") is not None:
        out["u"] = _vector(block["u"], f"{path}.u", B.shape[1])
    return out


def _parse_competitive(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    Phi = _matrix(_require(block, "Phi", path), f"{path}.Phi")
    return {
        "Phi": Phi,
        "u": _vector(_require(block, "u", path), f"{path}.u", Phi.shape[0]),
        "lambda": _number(_require(block, "lambda", path), f"{path}.lambda"),
        "n": Phi.shape[1],
    }


def _parse_network(block: Dict[str, Any], path: str) -> Dict[str, Any]:
    blocks = _require(block, "blocks", path)
    if not isinstance(blocks, list) or not blocks:
        raise _fail(f"{path}.blocks", "expected a non-empty list of subsystems")
    rates: List[float] = []
    dims: List[int] = []
    for i, item in enumerate(blocks):
        item_path = f"{path}.blocks[{i}]"
        if isinstance(item, dict):
            rates.append(_number(_require(item, "rate", item_path), f"{item_path}.rate"))
            dim = item.get("dim", 1)
        else:
            rates.append(_number(item, item_path))
            dim = 1
        if not isinstance(dim, int) or dim < 1:
            raise _fail(f"{item_path}.dim", "expected a positive integer")
        dims.append(dim)
    k = len(rates)
    gains = _square(_require(block, "gains", path), f"{path}.gains", k)
    mode = str(block.get("mode", GainMode.CONTINUOUS.value)).strip().lower()
    if mode not in (GainMode.CONTINUOUS.value, GainMode.DISCRETE.value):
        raise _fail(f"{path}.mode", f"unknown mode '{mode}'")
    return {"rates": rates, "gains": gains, "mode": mode, "block_dims": dims, "n": int(sum(dims))}


_PARSERS = {
    "linear": _parse_linear,
    "gradient_flow": _parse_gradient_flow,
    "firing_rate": _parse_firing_rate,
    "lure": _parse_lure,
    "implicit_nn": _parse_implicit_nn,
    "competitive": _parse_competitive,
    "network": _parse_network,
}


# =========================
# Bloques comunes
# =========================

def _box(value: Any, path: str, n: Optional[int] = None) -> Box:
    if not isinstance(value, dict):
        raise _fail(path, "expected an object with 'lo' and 'hi'")
    lo = _vector(_require(value, "lo", path), f"{path}.lo", n)
    hi = _vector(_require(value, "hi", path), f"{path}.hi", lo.shape[0])
    try:
        return Box(lo, hi)
    except ContractionError as e:
        raise _fail(path, str(e)) from e


def _signal(value: Any, path: str) -> Signal:
    if not isinstance(value, dict):
        raise _fail(path, "expected a signal object with a 'kind'")
    try:
        return Signal.from_json(value)
    except (KeyError, ValueError, TypeError) as e:
        raise _fail(path, f"invalid signal: {e}") from e


def _parse_simulation(block: Any, n: int) -> SimulationBlock:
    path = "simulation"
    if not isinstance(block, dict):
        raise _fail(path, "expected an object")
    sim = SimulationBlock()
    if block.get("t_span") is not None:
        span = _vector(block["t_span"], f"{path}.t_span", 2)
        if not span[1] > span[0]:
            raise _fail(f"{path}.t_span", "expected t0 < t1")
        sim.t_span = (float(span[0]), float(span[1]))
    if block.get("dt") is not None:
        sim.dt = _number(block["dt"], f"{path}.dt")
        if not sim.dt > 0.0:
            raise _fail(f"{path}.dt", "expected dt > 0")
    if block.get("seeds") is not None:
        seeds = block["seeds"]
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds) or not seeds:
            raise _fail(f"{path}.seeds", "expected a non-empty list of integers")
        sim.seeds = list(seeds)
    for key in ("x0", "y0"):
        if block.get(key) is not None:
            setattr(sim, key, _vector(block[key], f"{path}.{key}", n))
    if block.get("pairs") is not None:
        pairs = block["pairs"]
        if not isinstance(pairs, int) or pairs < 1:
            raise _fail(f"{path}.pairs", "expected a positive integer")
        sim.pairs = pairs
    if block.get("input") is not None:
        sim.input = _signal(block["input"], f"{path}.input")
    if block.get("input_y") is not None:
        sim.input_y = _signal(block["input_y"], f"{path}.input_y")
    for key in ("rate", "ell"):
        if block.get(key) is not None:
            setattr(sim, key, _number(block[key], f"{path}.{key}"))
    return sim


# =========================
# Entrada
# =========================

def parse_spec(data: Any, source: str = "<memory>") -> SystemSpecFile:
    """Valida un documento ya decodificado."""
    if not isinstance(data, dict):
        raise _fail("$", "top-level value must be an object")
    version = data.get("schema_version", config.REPORT_SCHEMA_VERSION)
    if version != config.REPORT_SCHEMA_VERSION:
        raise _fail("schema_version", f"unsupported schema version {version!r}")
    system = _require(data, "system", "$")
    if not isinstance(system, dict) or len(system) != 1:
        raise _fail("system", f"expected exactly one system kind among {', '.join(KINDS)}")
    kind, block = next(iter(system.items()))
    if kind not in _PARSERS:
        raise _fail("system", f"unknown system kind '{kind}' (expected one of {', '.join(KINDS)})")
    if not isinstance(block, dict):
        raise _fail(f"system.{kind}", "expected an object")
    params = _PARSERS[kind](block, f"system.{kind}")
    n = params["n"]

    norm = None
    if data.get("norm") is not None:
        try:
            norm = NormSpec.from_json(data["norm"])
            norm.check_dim(n)
        except ContractionError as e:
            raise _fail("norm", str(e)) from e

    domain = _box(data["domain"], "domain", n) if data.get("domain") is not None else None
    simulation = _parse_simulation(data["simulation"], n) if data.get("simulation") is not None else None
    logger.debug(f"Parsed {kind} spec from {source} (n={n})")
    return SystemSpecFile(kind=kind, params=params, norm=norm, domain=domain, simulation=simulation, source=source)


def loads_spec(text: str, source: str = "<memory>") -> SystemSpecFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecFileError(f"{source}:{e.lineno}:{e.colno}: {e.msg}", exit_code=2) from e
    return parse_spec(data, source)


def load_spec(path: str) -> SystemSpecFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise SpecFileError(f"could not read spec file '{path}': {e}", exit_code=2) from e
    return loads_spec(text, path)


def load_matrix(path: str) -> np.ndarray:
    """Matriz JSON (lista de listas o {"A": ...}) para lognorm."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise SpecFileError(f"could not read matrix file '{path}': {e}", exit_code=2) from e
    except json.JSONDecodeError as e:
        raise SpecFileError(f"{path}:{e.lineno}:{e.colno}: {e.msg}", exit_code=2) from e
    if isinstance(data, dict):
        data = _require(data, "A", "$")
    return _square(data, "A")
