import numpy as np
import pytest
from numpy.testing import assert_allclose

from contraction_cert.services.certificates import (
    CertificateMethod,
    ContractionCertificate,
    affine_equivalence_check,
    firing_rate_osl,
    gradient_flow_certificate,
    implicit_nn_analyze,
    implicit_nn_fixed_point,
    lti_l2_certificate,
    lure_certificate,
    lure_lmi_block,
    lure_lmi_search,
    lure_lmi_verify,
    metzler_linf_certificate,
)
from contraction_cert.services.models import (
    FiringRateSpec,
    ImplicitNNSpec,
    LureSpec,
    firing_rate_field,
    lure_field,
    make_activation,
)
from contraction_cert.services.norms import NormKind, NormSpec, log_norm, spectral_summary, vector_norm
from contraction_cert.services.simulate import empirical_contraction_rate
from contraction_cert.services.system_model import Sampler, estimate_osl
from contraction_cert.utils.errors import NotHurwitzError, NotMetzlerError, UnsupportedNormError

QUARTER = np.full((2, 2), 0.25)


# =========================
# Lineales
# =========================

def test_lti_identity_at_boundary_rate():
    cert = lti_l2_certificate(-np.eye(2), 1.0)
    assert cert.margin >= -1e-9
    assert cert.method == CertificateMethod.LYAPUNOV
    assert any("boundary" in note for note in cert.notes)


def test_lti_non_normal_matrix():
    A = np.array([[-1.0, 10.0], [0.0, -1.0]])
    # μ₂ no certifica: la parte simétrica tiene autovalor 4
    assert log_norm(A, NormSpec.l2()) == pytest.approx(4.0)
    cert = lti_l2_certificate(A, 0.5)
    P = cert.witness["P"]
    assert np.all(np.linalg.eigvalsh(P) > 0.0)
    assert log_norm(A, cert.norm) <= -0.5 + 1e-8


def test_lti_rotation_is_not_hurwitz():
    with pytest.raises(NotHurwitzError):
        lti_l2_certificate([[0.0, 1.0], [-1.0, 0.0]], 0.1)
    with pytest.raises(ValueError):
        lti_l2_certificate(-np.eye(2), 0.0)


def test_lti_random_hurwitz_matrices(rng):
    for _ in range(50):
        n = int(rng.integers(2, 6))
        M = rng.standard_normal((n, n))
        A = M - (spectral_summary(M).alpha + rng.uniform(0.5, 1.5)) * np.eye(n)
        r = 0.5 * abs(spectral_summary(A).alpha)
        cert = lti_l2_certificate(A, r)
        P = cert.witness["P"]
        eig_P = np.linalg.eigvalsh(P)
        assert eig_P.min() > 0.0
        assert np.linalg.eigvalsh(A.T @ P + P @ A + 2.0 * r * P).max() <= 1e-8 * eig_P.max()


def test_metzler_diagonal():
    cert = metzler_linf_certificate(np.diag([-1.0, -2.0]))
    assert cert.rate == pytest.approx(1.0)
    assert cert.method == CertificateMethod.PERRON
    # el vector de Perron de una diagonal no es estrictamente positivo
    assert cert.notes == ["weight: ones"]


def test_metzler_prefers_perron_weight():
    cert = metzler_linf_certificate([[-2.0, 1.0], [1.0, -2.0]])
    assert cert.notes == ["weight: perron"]
    assert cert.rate == pytest.approx(1.0)
    assert_allclose(cert.norm.eta, [1.0, 1.0])


def test_metzler_weight_reaches_spectral_abscissa():
    cert = metzler_linf_certificate([[-1.0, 2.0], [0.5, -3.0]])
    assert cert.rate == pytest.approx(2.0 - np.sqrt(2.0), abs=1e-8)
    assert np.all(cert.norm.eta > 0.0)


def test_metzler_random_matrices(rng, random_metzler_hurwitz):
    for _ in range(50):
        A = random_metzler_hurwitz(int(rng.integers(2, 7)))
        cert = metzler_linf_certificate(A)
        alpha = spectral_summary(A).alpha
        assert abs(log_norm(A, cert.norm) - alpha) <= 1e-8
        assert cert.rate == pytest.approx(-alpha, abs=1e-8)


def test_metzler_errors():
    with pytest.raises(NotHurwitzError):
        metzler_linf_certificate([[-1.0, 2.0], [2.0, -1.0]])
    with pytest.raises(NotMetzlerError):
        metzler_linf_certificate([[-1.0, -0.5], [0.0, -1.0]])


# =========================
# Equivalencias afines
# =========================

def test_affine_osl_weighted_l2():
    check = affine_equivalence_check(-np.eye(2), NormSpec.weighted_l2(np.eye(2)), -1.0, mode="osl")
    assert check.holds
    assert check.agrees


def test_affine_lip_weighted_linf_tight():
    check = affine_equivalence_check([[0.0, 2.0], [0.0, 0.0]], NormSpec.weighted_linf([1.0, 2.0]), 4.0, mode="lip")
    assert check.holds
    assert check.margin == pytest.approx(0.0)
    assert check.agrees
    assert not affine_equivalence_check([[0.0, 2.0], [0.0, 0.0]], NormSpec.weighted_linf([1.0, 2.0]), 3.9, mode="lip").holds


def test_affine_check_argument_errors():
    with pytest.raises(ValueError):
        affine_equivalence_check(-np.eye(2), NormSpec.l2(), 0.0, mode="bogus")
    with pytest.raises(UnsupportedNormError):
        affine_equivalence_check(-np.eye(2), NormSpec.l1(), 0.0)


# =========================
# Lur'e
# =========================

def _scalar_lure(eta):
    return LureSpec(A=[[-2.0]], B=[[1.0]], C_out=[[1.0]], rho=1.0, eta_rate=eta)


def test_lure_block_and_verify():
    s = _scalar_lure(0.5)
    assert_allclose(lure_lmi_block(s, [[1.0]], 1.0), [[-3.0, 2.0], [2.0, -2.0]])
    assert lure_lmi_verify(s, [[1.0]], 1.0).holds
    assert not lure_lmi_verify(_scalar_lure(2.0), [[1.0]], 1.0).holds
    with pytest.raises(ValueError):
        lure_lmi_verify(s, [[1.0]], -1.0)


def test_lure_search_finds_first_grid_multiplier():
    P, lam = lure_lmi_search(_scalar_lure(0.5))
    assert_allclose(P, [[1.0 / 3.0]])
    # la LMI vale para λ ∈ [0.0893, 1.244]; 0.1 es el primer punto de la grilla
    assert lam == pytest.approx(0.1)


def test_lure_without_feedback_needs_no_multiplier():
    s = LureSpec(A=-np.eye(2), B=np.zeros((2, 1)), C_out=[[1.0, 0.0]], rho=1.0, eta_rate=0.5)
    _, lam = lure_lmi_search(s)
    assert lam == 0.0


def test_lure_unstable_linear_part():
    s = LureSpec(A=np.eye(2), B=[[1.0], [0.0]], C_out=[[1.0, 0.0]], rho=1.0, eta_rate=0.5)
    assert lure_lmi_search(s) is None
    assert lure_certificate(s) is None


def test_lure_certificate():
    cert = lure_certificate(_scalar_lure(0.5))
    assert cert.method == CertificateMethod.LMI_SEARCH
    assert cert.rate == 0.5
    assert cert.witness["lambda"] == pytest.approx(0.1)


@pytest.mark.parametrize("B, c2", [([[1.0], [0.5]], 0.0), ([[-0.5], [0.5]], 0.3), ([[0.2], [-0.4]], -0.3)])
def test_lure_trajectories_contract_in_certificate_norm(B, c2):
    s = LureSpec(A=-2.0 * np.eye(2), B=B, C_out=[[1.0, c2]], rho=1.0, eta_rate=0.5)
    cert = lure_certificate(s)
    assert cert is not None
    assert cert.norm.kind == NormKind.WEIGHTED_L2
    pairs = [([1.0, -1.0], [-1.0, 0.5]), ([0.3, 0.8], [-0.6, -0.2]), ([0.0, 1.0], [0.0, -1.0])]
    est = empirical_contraction_rate(lure_field(s), cert.norm, pairs, (0.0, 10.0), 1e-2, certified_rate=cert.rate)
    assert est.no_overshoot
    assert est.rate >= cert.rate * (1.0 - 1e-2)


# =========================
# Formas cerradas
# =========================

def test_firing_rate_rates():
    tanh = make_activation("tanh")
    assert firing_rate_osl(FiringRateSpec(C=np.eye(2), A=-np.eye(2), u=[0, 0], activation=tanh)).rate == pytest.approx(1.0)
    assert firing_rate_osl(FiringRateSpec(C=np.eye(2), A=QUARTER, u=[0, 0], activation=tanh)).rate == pytest.approx(0.5)


def test_firing_rate_linear_activation_is_log_norm():
    A = np.array([[0.2, -0.3], [0.1, -0.5]])
    s = FiringRateSpec(C=np.diag([1.0, 2.0]), A=A, u=[0, 0], activation=make_activation("custom", 1.0, 1.0))
    assert firing_rate_osl(s).rate == pytest.approx(-log_norm(-s.C + A, NormSpec.linf()))


@pytest.mark.parametrize("activation", ["tanh", "relu"])
@pytest.mark.parametrize("seed", range(5))
def test_firing_rate_bound_dominates_sampled_osl(activation, seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 2
    s = FiringRateSpec(
        C=np.diag(rng.uniform(0.5, 2.0, n)),
        A=rng.standard_normal((n, n)),
        u=rng.standard_normal(n),
        activation=make_activation(activation),
    )
    sampled = estimate_osl(firing_rate_field(s), NormSpec.linf(), Sampler.uniform_grid(5))
    assert sampled.value <= -firing_rate_osl(s).rate + 1e-3


def test_gradient_flow_rates():
    assert gradient_flow_certificate(Q=np.diag([1.0, 3.0])).rate == pytest.approx(1.0)
    assert gradient_flow_certificate(reg=0.1).rate == pytest.approx(0.1)
    with pytest.raises(ValueError):
        gradient_flow_certificate(Q=np.eye(2), reg=0.1)
    with pytest.raises(ValueError):
        gradient_flow_certificate()


# =========================
# Redes implícitas
# =========================

def _inn(A, B=None, b=None):
    n = np.asarray(A).shape[0]
    return ImplicitNNSpec(
        A=A,
        B=np.eye(n)[:, :1] if B is None else B,
        b=np.zeros(n) if b is None else b,
        activation=make_activation("relu"),
    )


def test_implicit_nn_zero_weights():
    report = implicit_nn_analyze(_inn(np.zeros((2, 2)), B=[[1.0, -2.0], [0.5, 0.0]]))
    assert report.well_posed
    assert (report.ct_rate, report.alpha_star, report.dt_factor) == (1.0, 1.0, 0.0)
    assert report.lip_u_to_x == pytest.approx(3.0)


def test_implicit_nn_step_and_factor():
    report = implicit_nn_analyze(_inn(QUARTER))
    assert report.alpha_star == pytest.approx(1.0)
    assert report.dt_factor == pytest.approx(0.5)
    assert report.ct_rate == pytest.approx(0.5)

    report = implicit_nn_analyze(_inn([[-1.0, 0.5], [0.5, 0.0]]))
    assert report.alpha_star == pytest.approx(0.5)
    assert report.dt_factor == pytest.approx(0.75)


def test_implicit_nn_not_well_posed():
    assert not implicit_nn_analyze(_inn([[1.0]])).well_posed
    with pytest.raises(NotHurwitzError):
        implicit_nn_fixed_point(_inn([[1.0]]), [0.0])


def test_implicit_nn_fixed_point():
    s = _inn(QUARTER, B=[[1.0], [0.0]], b=[0.1, -0.2])
    result = implicit_nn_fixed_point(s, [0.5])
    assert result.converged
    x = result.x_star
    residual = x - np.maximum(s.A @ x + s.B @ np.array([0.5]) + s.b, 0.0)
    assert vector_norm(residual, NormSpec.linf()) <= 1e-9
    assert result.factor_measured <= 0.5 + 1e-2
    assert result.factor_certified == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(10))
def test_implicit_nn_input_lipschitz_bound(seed):
    rng = np.random.default_rng(seed)
    s = ImplicitNNSpec(
        A=rng.uniform(-0.2, 0.2, size=(4, 4)),
        B=rng.standard_normal((4, 2)),
        b=rng.standard_normal(4),
        activation=make_activation("relu"),
    )
    report = implicit_nn_analyze(s)
    assert report.well_posed
    linf = NormSpec.linf()
    for _ in range(10):
        u, v = rng.uniform(-2.0, 2.0, 2), rng.uniform(-2.0, 2.0, 2)
        x_u = implicit_nn_fixed_point(s, u).require_converged().x_star
        x_v = implicit_nn_fixed_point(s, v).require_converged().x_star
        # cada punto fijo sale con error ≤ 1e-10
        assert vector_norm(x_u - x_v, linf) <= report.lip_u_to_x * vector_norm(u - v, linf) + 1e-9


def test_certificate_requires_exactly_one_kind():
    with pytest.raises(ValueError):
        ContractionCertificate(norm=NormSpec.l2(), method=CertificateMethod.CLOSED_FORM, margin=1.0, rate=1.0, factor=0.5)
    with pytest.raises(ValueError):
        ContractionCertificate(norm=NormSpec.l2(), method=CertificateMethod.CLOSED_FORM, margin=1.0)
    cert = ContractionCertificate(norm=NormSpec.l2(), method=CertificateMethod.SAMPLED, margin=0.1, factor=0.9)
    assert not cert.certified
    assert cert.to_json()["factor"] == 0.9
