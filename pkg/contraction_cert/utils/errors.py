"""Jerarquía de excepciones del paquete."""

from __future__ import annotations

from typing import Optional


class ContractionError(Exception):
    """Base de todos los errores de dominio."""


class DimensionError(ContractionError, ValueError):
    pass


class WeightError(ContractionError, ValueError):
    """Peso no definido positivo (ℓ2 ponderada) o no positivo (ℓ∞ ponderada)."""


class UnsupportedNormError(ContractionError, ValueError):
    pass


class NotHurwitzError(ContractionError):
    def __init__(self, message: str, alpha: Optional[float] = None):
        super().__init__(message)
        self.alpha = alpha


class NotMetzlerError(ContractionError, ValueError):
    pass


class NumericalFailure(ContractionError, RuntimeError):
    pass


class EvaluationError(ContractionError, RuntimeError):
    pass


class IntegrationBlowUp(ContractionError, RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class FixedPointError(ContractionError, RuntimeError):
    pass


class SpecFileError(ContractionError, ValueError):
    """
    Error al leer un archivo de especificación.

    exit_code: 2 si el JSON no se pudo parsear, 3 si el contenido no valida.
    field: ruta del campo problemático (e.g. "system.linear.A").
    """

    def __init__(self, message: str, *, exit_code: int = 3, field: Optional[str] = None):
        super().__init__(message)
        self.exit_code = exit_code
        self.field = field


class InvalidModelError(ContractionError, ValueError):
    """Parámetros de un modelo incompatibles con sus supuestos (e.g. C no diagonal)."""
