"""
Sobre JSON de los reportes y salidas CSV.

Todo reporte lleva schema_version; el timestamp es opcional (--no-timestamp)
para que corridas idénticas produzcan bytes idénticos.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
import os
from typing import Any, Dict, Optional

import numpy as np

from contraction_cert.utils import config
from contraction_cert.utils.errors import SpecFileError
from contraction_cert.utils.run_metrics import get_run_metrics

logger = logging.getLogger(__name__)

STATUSES = ("pass", "fail", "found", "not_found", "ok", "error")


def _plain(value: Any) -> Any:
    """numpy → tipos JSON; no finitos → None."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        x = float(value)
        return x if math.isfinite(x) else None
    return value


def build_report(
    command: str,
    status: str,
    result: Dict[str, Any],
    timestamp: Optional[bool] = None,
) -> Dict[str, Any]:
    if status not in STATUSES:
        raise ValueError(f"unknown report status '{status}'")
    report: Dict[str, Any] = {
        "schema_version": config.REPORT_SCHEMA_VERSION,
        "command": command,
        "status": status,
        "result": _plain(result),
        "metrics": get_run_metrics().snapshot(),
    }
    use_ts = config.REPORT_TIMESTAMPS if timestamp is None else timestamp
    if use_ts:
        report["timestamp"] = dt.datetime.now(dt.timezone.utc).isoformat()
    return report


def dumps_report(report: Dict[str, Any]) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def load_report(text: str) -> Dict[str, Any]:
    """Re-parsea un reporte emitido y verifica su versión de esquema."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecFileError(f"report:{e.lineno}:{e.colno}: {e.msg}", exit_code=2) from e
    if not isinstance(data, dict):
        raise SpecFileError("report must be a JSON object", field="$")
    if data.get("schema_version") != config.REPORT_SCHEMA_VERSION:
        raise SpecFileError(
            f"unsupported report schema version {data.get('schema_version')!r}", field="schema_version"
        )
    for key in ("command", "status", "result", "metrics"):
        if key not in data:
            raise SpecFileError(f"report is missing '{key}'", field=key)
    return data


def mu_field_csv(points: np.ndarray, mu: np.ndarray) -> str:
    """Filas (x_1..x_n, mu) del barrido de log norma."""
    points = np.atleast_2d(points)
    fieldnames = [f"x_{i + 1}" for i in range(points.shape[1])] + ["mu"]
    sio = io.StringIO()
    writer = csv.DictWriter(sio, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for x, m in zip(points, mu):
        row = {f"x_{i + 1}": repr(float(v)) for i, v in enumerate(x)}
        row["mu"] = repr(float(m))
        writer.writerow(row)
    return sio.getvalue()


def write_output(out_dir: Optional[str], name: str, content: str) -> Optional[str]:
    """Escribe content en out_dir/name; sin out_dir no escribe nada."""
    if not out_dir:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(content)
    logger.info(f"Wrote {path} ({len(content)} bytes)")
    return path
