"""Fixtures compartidos: generador con semilla, fábricas de matrices y métricas limpias."""

import numpy as np
import pytest

from contraction_cert.utils.run_metrics import get_run_metrics


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_matrix(rng):
    def _make(n, scale=1.0):
        return scale * rng.standard_normal((n, n))

    return _make


@pytest.fixture
def random_spd(rng):
    def _make(n):
        M = rng.standard_normal((n, n))
        return M @ M.T + n * np.eye(n)

    return _make


@pytest.fixture
def random_metzler_hurwitz(rng):
    """Metzler con diagonal dominante negativa: siempre Hurwitz."""

    def _make(n):
        off = rng.uniform(0.0, 1.0, size=(n, n))
        np.fill_diagonal(off, 0.0)
        return off - np.diag(off.sum(axis=1) + rng.uniform(0.5, 2.0, size=n))

    return _make


@pytest.fixture(autouse=True)
def _clean_metrics():
    get_run_metrics().reset()
    yield
    get_run_metrics().reset()
