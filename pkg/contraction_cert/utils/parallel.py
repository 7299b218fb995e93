"""Evaluación de funciones sobre muestras con paralelismo acotado."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from contraction_cert.utils import config

T = TypeVar("T")
R = TypeVar("R")


def map_points(fn: Callable[[np.ndarray], float], points: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
    """
    Evalúa fn en cada fila de points y devuelve los valores en el mismo orden.

    Con threads > 1 usa un pool de hilos; fn debe ser segura para llamadas
    concurrentes.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    workers = config.THREADS if threads is None else max(1, int(threads))
    if workers == 1 or len(points) < 2 * workers:
        return np.array([fn(p) for p in points], dtype=float)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.fromiter(pool.map(fn, points), dtype=float, count=len(points))


def max_reduce(fn: Callable[[np.ndarray], float], points: np.ndarray, threads: Optional[int] = None) -> Tuple[float, int, np.ndarray]:
    """
    Máximo de fn sobre las filas de points.

    Returns:
        (valor máximo, índice del primer argmax, todos los valores)
    """
    values = map_points(fn, points, threads)
    if values.size == 0:
        raise ValueError("empty sample set")
    idx = int(np.argmax(values))
    return float(values[idx]), idx, values


def map_items(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """Igual que map_points pero para objetos arbitrarios; conserva el orden."""
    items = list(items)
    workers = config.THREADS if threads is None else max(1, int(threads))
    if workers == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
