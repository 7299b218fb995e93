import numpy as np
import pytest
from numpy.testing import assert_allclose

from contraction_cert.services import models
from contraction_cert.services.system_model import Box, jacobian_at
from contraction_cert.utils.errors import DimensionError, InvalidModelError


def _fd_jacobian(fn, x, h=1e-6):
    cols = []
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * h))
    return np.column_stack(cols)


def test_builtin_activations_have_unit_slope_bounds():
    for name in ("tanh", "relu"):
        act = models.make_activation(name)
        assert (act.d1, act.d2) == (0.0, 1.0)


def test_custom_activation_rules():
    linear = models.make_activation("custom", 0.5, 0.5)
    assert_allclose(linear.phi(np.array([2.0, -4.0])), [1.0, -2.0])
    with pytest.raises(InvalidModelError):
        models.make_activation("custom", 1.0, 0.0)
    with pytest.raises(InvalidModelError):
        models.make_activation("custom", 0.0, 1.0)
    with pytest.raises(InvalidModelError):
        models.make_activation("sigmoid")


def test_firing_rate_spec_requires_diagonal_nonnegative_c():
    act = models.make_activation("tanh")
    with pytest.raises(InvalidModelError):
        models.FiringRateSpec(C=[[1.0, 0.1], [0.0, 1.0]], A=np.zeros((2, 2)), u=[0.0, 0.0], activation=act)
    with pytest.raises(InvalidModelError):
        models.FiringRateSpec(C=np.diag([1.0, -1.0]), A=np.zeros((2, 2)), u=[0.0, 0.0], activation=act)
    with pytest.raises(DimensionError):
        models.FiringRateSpec(C=np.eye(2), A=np.zeros((2, 2)), u=[0.0], activation=act)


def test_lure_spec_parameters_must_be_positive():
    with pytest.raises(InvalidModelError):
        models.LureSpec(A=[[-1.0]], B=[[1.0]], C_out=[[1.0]], rho=0.0, eta_rate=0.5)
    with pytest.raises(InvalidModelError):
        models.LureSpec(A=[[-1.0]], B=[[1.0]], C_out=[[1.0]], rho=1.0, eta_rate=0.0)
    s = models.LureSpec(A=-np.eye(2), B=[[1.0], [0.0]], C_out=[[0.0, 1.0]], rho=1.0, eta_rate=0.5)
    assert (s.n, s.m) == (2, 1)


def test_implicit_nn_requires_unit_slope_activation():
    with pytest.raises(InvalidModelError):
        models.ImplicitNNSpec(
            A=np.zeros((2, 2)), B=np.zeros((2, 1)), b=[0.0, 0.0], activation=models.make_activation("custom", 2.0, 2.0)
        )


def test_firing_rate_jacobian_matches_finite_differences(rng):
    spec = models.FiringRateSpec(
        C=np.diag([1.0, 2.0]),
        A=rng.standard_normal((2, 2)),
        u=[0.3, -0.1],
        activation=models.make_activation("tanh"),
    )
    f = models.firing_rate_field(spec)
    x = np.array([0.2, -0.4])
    assert_allclose(jacobian_at(f, x), _fd_jacobian(f.evaluate, x), atol=1e-7)


def test_firing_rate_input_channel():
    spec = models.FiringRateSpec(C=np.eye(2), A=np.zeros((2, 2)), u=[0.0, 0.0], activation=models.make_activation("tanh"))
    f = models.firing_rate_field(spec, input_domain=Box.symmetric(1.0, 2))
    assert f.parametric
    assert_allclose(f.evaluate([0.0, 0.0], [0.5, 0.0]), [np.tanh(0.5), 0.0])
    with pytest.raises(DimensionError):
        models.firing_rate_field(spec, input_domain=Box.symmetric(1.0, 3))


def test_logistic_gradient_jacobian_matches_finite_differences(rng):
    X = rng.standard_normal((20, 3))
    y = np.sign(rng.standard_normal(20))
    f = models.logistic_gradient_field(X, y, reg=0.1)
    w = rng.standard_normal(3) * 0.3
    assert_allclose(jacobian_at(f, w), _fd_jacobian(f.evaluate, w), atol=1e-7)
    with pytest.raises(InvalidModelError):
        models.logistic_gradient_field(X, y, reg=0.0)


def test_double_well_field():
    f = models.double_well_gradient_field([1.0])
    assert_allclose(f.evaluate([1.0]), [0.0])
    assert_allclose(f.evaluate([0.5]), [0.375])
    assert_allclose(jacobian_at(f, [0.0]), [[1.0]])
    assert_allclose(f.domain.lo, [-2.0])


def test_implicit_nn_map_jacobian():
    spec = models.ImplicitNNSpec(
        A=np.array([[0.2, -0.1], [0.0, 0.3]]),
        B=np.eye(2),
        b=[0.5, 0.5],
        activation=models.make_activation("relu"),
    )
    g = models.implicit_nn_map(spec, 0.5, u=[0.0, 0.0])
    # en x = 0 ambos argumentos de relu son positivos
    expected = 0.5 * np.eye(2) + 0.5 * spec.A
    assert_allclose(jacobian_at(g, [0.0, 0.0]), expected)
    with pytest.raises(InvalidModelError):
        models.implicit_nn_map(spec, 0.0, u=[0.0, 0.0])


def test_dictionary_validation():
    with pytest.raises(InvalidModelError):
        models.validate_dictionary([[1.0, -0.1], [0.0, 1.0]])
    with pytest.raises(InvalidModelError):
        models.validate_dictionary([[2.0, 0.0], [0.0, 1.0]])
    Phi = models.validate_dictionary(np.eye(2))
    assert Phi.shape == (2, 2)


def test_competitive_field_thresholds_inputs():
    Phi = np.eye(2)
    f = models.competitive_field(Phi, u=[1.0, 0.2], lam=0.5)
    # W = 0 para columnas ortogonales: ẋ = −x + relu(u − λ)
    assert_allclose(f.evaluate([0.0, 0.0]), [0.5, 0.0])
    assert_allclose(f.domain.lo, [0.0, 0.0])
    with pytest.raises(InvalidModelError):
        models.competitive_field(Phi, u=[1.0, 0.2], lam=0.0)
