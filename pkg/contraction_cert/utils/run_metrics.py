"""
Métricas de ejecución.

Cuenta evaluaciones de campos, Jacobianos, pasos de integración e iteraciones
de punto fijo durante un comando. Se adjuntan al reporte JSON bajo "metrics".
"""

from __future__ import annotations

import logging
import threading
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)

_MAX_ERRORS = 100


class RunMetrics:
    """
    Contadores de una ejecución.

    Estructura exportada:
    {
        "counters": {
            "jacobian_evaluations": 1331,
            "integration_steps": 20000,
            "fixed_point_iterations": 87
        },
        "last_errors": [
            {"type": "fixed_point", "error": "did not converge", "entity_id": "t=1.5"}
        ]
    }
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._counters: Dict[str, int] = {}
        self._errors: List[Dict[str, Any]] = []

    def increment_counter(self, counter_name: str, amount: int = 1) -> None:
        """
        Incrementa un contador.

        Args:
            counter_name: Nombre del contador
            amount: Cantidad a incrementar
        """
        with self._lock:
            self._counters[counter_name] = self._counters.get(counter_name, 0) + int(amount)

    def record_error(self, error_type: str, error_message: str, entity_id: Optional[str] = None) -> None:
        """
        Registra un error recuperable (solo los últimos 100).

        Args:
            error_type: Tipo de error (e.g., "fixed_point", "integration")
            error_message: Mensaje de error
            entity_id: Identificador del caso (opcional)
        """
        entry: Dict[str, Any] = {"type": error_type, "error": error_message}
        if entity_id:
            entry["entity_id"] = entity_id
        with self._lock:
            self._errors.insert(0, entry)
            del self._errors[_MAX_ERRORS:]

    def get_counter(self, counter_name: str) -> int:
        with self._lock:
            return self._counters.get(counter_name, 0)

    def get_all_counters(self) -> Dict[str, int]:
        with self._lock:
            return dict(sorted(self._counters.items()))

    def get_recent_errors(self, limit: int = 10) -> List[Dict[str, Any]]:
        with self._lock:
            return list(self._errors[:limit])

    def snapshot(self) -> Dict[str, Any]:
        return {"counters": self.get_all_counters(), "last_errors": self.get_recent_errors()}

    def reset(self) -> None:
        """Reinicia contadores y errores."""
        with self._lock:
            self._counters = {}
            self._errors = []
        logger.debug("Run metrics reset")


# Instancia singleton
_metrics_instance: Optional[RunMetrics] = None


def get_run_metrics() -> RunMetrics:
    """
    Obtiene la instancia singleton de métricas.

    Returns:
        RunMetrics instance
    """
    global _metrics_instance
    if _metrics_instance is None:
        _metrics_instance = RunMetrics()
    return _metrics_instance
