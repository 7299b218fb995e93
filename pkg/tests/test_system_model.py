import numpy as np
import pytest
from numpy.testing import assert_allclose

from contraction_cert.services.models import (
    FiringRateSpec,
    firing_rate_field,
    linear_field,
    make_activation,
    quadratic_gradient_field,
)
from contraction_cert.services.norms import NormSpec, log_norm, matrix_norm
from contraction_cert.services.system_model import (
    SAMPLED_LABEL,
    Box,
    Sampler,
    SamplerKind,
    VectorFieldSpec,
    default_sampler,
    differential_condition_residual,
    estimate_lip,
    estimate_lip_theta,
    estimate_osl,
    jacobian_at,
    one_sided_pair_quotient,
    sampled_differential_sup,
    sampled_pair_sup,
    tie_set,
)
from contraction_cert.utils.errors import DimensionError, EvaluationError, UnsupportedNormError
from contraction_cert.utils.run_metrics import get_run_metrics


def _scalar(fn, lo=-1.0, hi=1.0, jac=None):
    return VectorFieldSpec(evaluator=fn, jacobian=jac, domain=Box([lo], [hi]))


# =========================
# Box y Sampler
# =========================

def test_box_validation_and_geometry():
    box = Box([0.0, -1.0], [2.0, 1.0])
    assert box.dim == 2
    assert_allclose(box.center, [1.0, 0.0])
    assert box.diameter == pytest.approx(np.sqrt(8.0))
    assert box.contains([2.0, 1.0])
    assert not box.contains([2.1, 0.0])
    with pytest.raises(DimensionError):
        Box([1.0], [1.0])
    with pytest.raises(DimensionError):
        Box([0.0, 0.0], [1.0])


def test_box_json():
    box = Box.from_json({"lo": [-1, -2], "hi": [1, 2]})
    assert box.to_json() == {"lo": [-1.0, -2.0], "hi": [1.0, 2.0]}


def test_grid_sampler_covers_corners():
    pts = Sampler.uniform_grid(11).points(Box.symmetric(1.0, 2))
    assert pts.shape == (121, 2)
    assert any(np.allclose(p, [-1.0, 1.0]) for p in pts)
    assert any(np.allclose(p, [0.0, 0.0]) for p in pts)


def test_lhs_sampler_is_seeded_and_inside_box():
    box = Box([0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0, 4.0])
    a = Sampler.latin_hypercube(50, seed=3).points(box)
    b = Sampler.latin_hypercube(50, seed=3).points(box)
    assert_allclose(a, b)
    assert all(box.contains(p) for p in a)


def test_default_sampler_switches_on_dimension():
    assert default_sampler(3).kind == SamplerKind.UNIFORM_GRID
    assert default_sampler(5).kind == SamplerKind.LATIN_HYPERCUBE


# =========================
# Jacobianos
# =========================

def test_affine_jacobian_is_constant(random_matrix):
    A = random_matrix(3)
    f = linear_field(A, a=np.ones(3))
    assert_allclose(jacobian_at(f, [0.3, -0.2, 0.9]), A)


def test_finite_difference_jacobian():
    f = VectorFieldSpec(evaluator=lambda x: np.array([-x[0] ** 3, -x[1]]), domain=Box.symmetric(2.0, 2))
    assert_allclose(jacobian_at(f, [1.0, 0.0]), np.diag([-3.0, -1.0]), atol=1e-6)


def test_jacobian_outside_domain_only_warns(caplog):
    f = linear_field(-np.eye(2))
    J = jacobian_at(f, [5.0, 0.0])
    assert_allclose(J, -np.eye(2))
    assert "outside the domain" in caplog.text


def test_evaluator_failure_is_wrapped():
    def broken(x):
        raise ZeroDivisionError("boom")

    f = _scalar(broken)
    with pytest.raises(EvaluationError):
        f.evaluate([0.0])


def test_evaluations_are_counted():
    f = linear_field(-np.eye(2))
    f.evaluate([1.0, 0.0])
    f.evaluate([0.0, 1.0])
    assert get_run_metrics().get_counter("field_evaluations") == 2


# =========================
# Estimaciones muestreadas
# =========================

def test_lip_of_affine_field_is_exact(random_matrix):
    A = random_matrix(2)
    bound = estimate_lip(linear_field(A), NormSpec.linf())
    assert bound.value == pytest.approx(matrix_norm(A, NormSpec.linf()))
    assert bound.certified is False
    assert bound.label == SAMPLED_LABEL


def test_lip_of_tanh():
    bound = estimate_lip(_scalar(np.tanh, -5.0, 5.0), NormSpec.l2())
    assert bound.value == pytest.approx(1.0, abs=1e-3)


def test_lip_of_sine_coupling():
    f = VectorFieldSpec(evaluator=lambda x: np.array([np.sin(x[1]), 0.0]), domain=Box.symmetric(1.0, 2))
    assert estimate_lip(f, NormSpec.linf()).value == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("spec", [NormSpec.l1(), NormSpec.l2(), NormSpec.linf(), NormSpec.weighted_linf([1.0, 3.0])])
def test_osl_of_negative_identity(spec):
    assert estimate_osl(linear_field(-np.eye(2)), spec).value == pytest.approx(-1.0)


def test_osl_of_negative_cube_is_zero():
    f = _scalar(lambda x: -(x**3), -2.0, 2.0, jac=lambda x: np.array([[-3.0 * x[0] ** 2]]))
    bound = estimate_osl(f, NormSpec.l2())
    assert bound.value == pytest.approx(0.0, abs=1e-3)
    assert_allclose(bound.argmax, [0.0], atol=1e-12)


def test_osl_of_quadratic_gradient_flow():
    f = quadratic_gradient_field(np.diag([1.0, 3.0]))
    assert estimate_osl(f, NormSpec.l2()).value == pytest.approx(-1.0, abs=1e-3)


def test_osl_grows_under_nested_grid_refinement():
    s = FiringRateSpec(C=np.eye(2), A=[[0.5, -1.2], [0.8, 0.3]], u=[0.3, -0.2], activation=make_activation("tanh"))
    f = firing_rate_field(s)
    # las grillas 3, 5, 9, 17 por eje están anidadas: cada una contiene a la anterior
    values = [estimate_osl(f, NormSpec.linf(), Sampler.uniform_grid(k)).value for k in (3, 5, 9, 17)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_lip_theta_of_additive_input():
    f = VectorFieldSpec(
        evaluator=lambda x, th: -x + th,
        domain=Box.symmetric(1.0, 2),
        parameter_domain=Box.symmetric(1.0, 2),
    )
    bound = estimate_lip_theta(f, NormSpec.linf(), NormSpec.linf(), Sampler.latin_hypercube(20))
    assert bound.value == pytest.approx(1.0, abs=1e-8)
    assert bound.argmax_theta is not None


def test_lip_theta_requires_parameter_channel():
    with pytest.raises(ValueError):
        estimate_lip_theta(linear_field(-np.eye(2)), NormSpec.l2(), NormSpec.l2())


# =========================
# Condiciones diferencial / integral
# =========================

def test_tie_set():
    assert tie_set([1.0, -2.0, 2.0]).tolist() == [1, 2]


def test_pair_quotient_of_negative_identity_l1(rng):
    f = linear_field(-np.eye(3), domain=Box.symmetric(2.0, 3))
    x, y = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    assert one_sided_pair_quotient(f, NormSpec.l1(), x, y) == pytest.approx(-1.0)


def test_pair_quotient_rejects_equal_points():
    f = linear_field(-np.eye(2))
    with pytest.raises(ValueError):
        one_sided_pair_quotient(f, NormSpec.l2(), [0.1, 0.2], [0.1, 0.2])


def test_differential_residual_uses_linf_tie_set():
    f = linear_field([[-1.0, 2.0], [0.0, -1.0]])
    assert differential_condition_residual(f, NormSpec.linf(), [0.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0)


def test_differential_residual_negative_identity():
    f = linear_field(-np.eye(2))
    for spec in (NormSpec.l2(), NormSpec.linf()):
        assert differential_condition_residual(f, spec, [0.5, 0.5], [0.3, -1.0]) == pytest.approx(-1.0)


def test_table_conditions_reject_lp():
    f = linear_field(-np.eye(2))
    with pytest.raises(UnsupportedNormError):
        differential_condition_residual(f, NormSpec.lp(3.0), [0.0, 0.0], [1.0, 0.0])


def test_pair_sup_bounded_by_log_norm():
    A = np.array([[-2.0, 1.0], [0.0, -3.0]])
    bound = sampled_pair_sup(linear_field(A), NormSpec.linf(), pairs=100, short_pairs=100)
    assert bound.value <= log_norm(A, NormSpec.linf()) + 1e-9


@pytest.mark.parametrize("spec", [NormSpec.l1(), NormSpec.l2(), NormSpec.linf()])
def test_differential_and_integral_sups_match_log_norm(spec, random_matrix):
    A = random_matrix(3)
    f = linear_field(A)
    expected = log_norm(A, spec)
    # un solo punto (el centro): los pares estructurados quedan dentro de la caja
    sampler = Sampler.uniform_grid(1)
    diff = sampled_differential_sup(f, spec, sampler, directions=64)
    pair = sampled_pair_sup(f, spec, sampler, pairs=200, short_pairs=200)
    assert diff.value == pytest.approx(expected, abs=1e-3)
    assert pair.value == pytest.approx(expected, abs=1e-3)
