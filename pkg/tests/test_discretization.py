import numpy as np
import pytest
from numpy.testing import assert_allclose

from contraction_cert.services.discretization import banach_iterate, euler_map, find_contracting_step
from contraction_cert.services.models import linear_field
from contraction_cert.services.norms import NormSpec, vector_norm
from contraction_cert.services.system_model import Box, DiscreteMapSpec, jacobian_at
from contraction_cert.utils.errors import FixedPointError


def _affine_map(a, b):
    return DiscreteMapSpec(evaluator=lambda x: a * x + b, jacobian=lambda x: np.array([[a]]), domain=Box.symmetric(10.0, 1))


def test_euler_map():
    g = euler_map(linear_field([[-1.0]]), 0.5)
    assert_allclose(g.evaluate([2.0]), [1.0])
    assert_allclose(jacobian_at(g, [0.0]), [[0.5]])
    with pytest.raises(ValueError):
        euler_map(linear_field([[-1.0]]), 0.0)


def test_contracting_step_for_scalar_decay():
    step = find_contracting_step(linear_field([[-1.0]]), NormSpec.linf())
    assert step is not None
    assert step.alpha == pytest.approx(1.0, abs=1e-4)
    assert step.factor <= 1e-5
    assert step.first_factor < 1.0
    assert step.heuristic


def test_contracting_step_upper_triangular():
    step = find_contracting_step(linear_field([[-2.0, 1.0], [0.0, -3.0]]), NormSpec.linf())
    # ‖I + αA‖∞ = max(|1−2α| + α, |1−3α|): óptimo 0.5 en α = 0.5
    assert step.factor <= 0.5 + 1e-4
    assert step.alpha == pytest.approx(0.5, abs=1e-3)


def test_no_contracting_step_for_expanding_field():
    assert find_contracting_step(linear_field([[1.0]]), NormSpec.l2()) is None


def test_banach_affine_contraction():
    result = banach_iterate(_affine_map(0.5, 1.0), [0.0], tol=1e-12, max_iter=200)
    assert result.converged
    assert_allclose(result.x_star, [2.0], atol=1e-11)
    assert result.factor_measured == pytest.approx(0.5)
    assert abs(result.x_star[0] - 2.0) <= result.aposteriori_bound + 1e-15
    assert result.to_json()["converged"] is True


def test_banach_detects_divergence():
    result = banach_iterate(_affine_map(2.0, 0.0), [1.0], tol=1e-8, max_iter=100)
    assert result.diverged
    assert not result.converged


def test_banach_max_iter():
    result = banach_iterate(_affine_map(0.5, 1.0), [0.0], tol=1e-14, max_iter=3)
    assert not result.converged
    assert result.iterations == 3
    with pytest.raises(FixedPointError):
        result.require_converged()


def test_banach_warm_start_at_fixed_point():
    result = banach_iterate(_affine_map(0.5, 1.0), [2.0], tol=1e-10, max_iter=50)
    assert result.converged
    assert result.iterations == 1


def test_banach_certified_factor_passes_through():
    result = banach_iterate(_affine_map(0.5, 1.0), [0.0], tol=1e-10, max_iter=200, factor=0.5)
    assert result.converged
    assert result.factor_certified == 0.5
    assert result.apriori_bound + 1e-15 >= abs(result.x_star[0] - 2.0)
    with pytest.raises(ValueError):
        banach_iterate(_affine_map(0.5, 1.0), [0.0], tol=0.0, max_iter=10)


def test_banach_aposteriori_bound_holds_every_iteration():
    result = banach_iterate(_affine_map(0.5, 1.0), [0.0], tol=1e-12, max_iter=200)
    x = 0.0
    for bound in result.aposteriori_bounds:
        x = 0.5 * x + 1.0
        assert abs(x - 2.0) <= bound * (1.0 + 1e-12) + 1e-15


def test_banach_ratio_keeps_warm_up_transient():
    # pendiente 0.9 sobre x > 1 y 0.1 debajo (continua en 1); punto fijo 0
    g = DiscreteMapSpec(
        evaluator=lambda x: np.where(x > 1.0, 0.9 * x - 0.8, 0.1 * x),
        jacobian=lambda x: np.array([[0.9 if x[0] > 1.0 else 0.1]]),
        domain=Box.symmetric(50.0, 1),
    )
    result = banach_iterate(g, [40.0], tol=1e-12, max_iter=200)
    assert result.converged
    assert result.iterations > 20
    assert result.distances[-1] / result.distances[-2] == pytest.approx(0.1, rel=1e-6)
    assert result.factor_measured == pytest.approx(0.9, rel=1e-9)
    assert abs(result.x_star[0]) <= result.aposteriori_bound


def _planar_map():
    M = np.array([[0.3, 0.2], [0.1, 0.4]])
    b = np.array([1.0, -1.0])
    return M, b, DiscreteMapSpec(evaluator=lambda x: M @ x + b, jacobian=lambda x: M, domain=Box.symmetric(10.0, 2))


def test_banach_certified_bound_on_planar_map():
    M, b, g = _planar_map()
    x_star = np.linalg.solve(np.eye(2) - M, b)
    linf = NormSpec.linf()
    # ‖M‖∞ = 0.5
    result = banach_iterate(g, [5.0, 5.0], tol=1e-12, max_iter=500, spec=linf, factor=0.5)
    assert result.converged
    x = np.array([5.0, 5.0])
    for bound in result.aposteriori_bounds:
        x = M @ x + b
        assert vector_norm(x - x_star, linf) <= bound * (1.0 + 1e-12) + 1e-14


def test_distance_between_iterates_decreases_monotonically():
    M, b, _ = _planar_map()
    linf = NormSpec.linf()
    x, y = np.array([3.0, 2.0]), np.array([-4.0, -1.5])
    d0 = vector_norm(x - y, linf)
    previous = d0
    for k in range(1, 31):
        x, y = M @ x + b, M @ y + b
        d = vector_norm(x - y, linf)
        assert d <= 0.5**k * d0 * (1.0 + 1e-10)
        assert d <= previous
        previous = d
