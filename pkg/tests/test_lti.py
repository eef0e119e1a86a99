import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoscale.bounds import envelope_autonomous
from twoscale.errors import NumericalError, ThresholdError, ValidationError
from twoscale.integrator import integrate_lti_exact
from twoscale.lti import (
    ABOVE_THRESHOLD_UNKNOWN,
    BELOW_THRESHOLD_HURWITZ,
    GainMatrixParams,
    LtiBlockSystem,
    contraction_certificate,
    diagram_check,
    envelope_lti,
    epsilon_star_0_lti,
    epsilon_star_lti,
    full_generator,
    gain_matrix_lti,
    hurwitz_gain_check,
    reduced_lti,
    shifted_lti,
)
from twoscale.specnorm import induced_norm, log_norm, spectral_abscissa
from twoscale.sysmodel import ConstantsTable

from conftest import random_lti


def scalar(a, b, c, d):
    return LtiBlockSystem(*(np.array([[v]], dtype=float) for v in (a, b, c, d)))


def autonomous_constants(s):
    return ConstantsTable(
        c_f=-log_norm(reduced_lti(s)), c_g=-log_norm(s.D), l_fx=1.0,
        l_fz=float(induced_norm(s.B, s.z_norm, s.x_norm)), l_gx=float(induced_norm(s.C, s.x_norm, s.z_norm)),
    )


def measured_errors(s, eps, x0, z0, grid):
    traj = integrate_lti_exact(full_generator(s, eps), np.r_[x0, z0], grid).x
    xr = integrate_lti_exact(reduced_lti(s), x0, grid).x
    ex = np.linalg.norm(traj[:, : s.n_x] - xr, axis=1)
    ez = np.linalg.norm(traj[:, s.n_x:] + xr @ s.DinvC.T, axis=1)
    return ex, ez


# --- structure ------------------------------------------------------------


def test_reduced_matrix_examples(desk_lti):
    assert reduced_lti(desk_lti)[0, 0] == pytest.approx(-2.0)
    A = np.array([[0.5, 1.0], [0.0, -1.0]])
    for B, C in ((np.ones((2, 1)), np.zeros((1, 2))), (np.zeros((2, 1)), np.ones((1, 2)))):
        s = LtiBlockSystem(A, B, C, np.array([[-1.0]]))
        assert reduced_lti(s) == pytest.approx(A)


def test_singular_fast_block_rejected():
    with pytest.raises(NumericalError, match="singular"):
        reduced_lti(scalar(1.0, 1.0, 1.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_shifted_generator_is_similar(seed, eps):
    s = random_lti(np.random.default_rng(seed), max_dim=4)
    a = np.sort_complex(np.linalg.eigvals(shifted_lti(s, eps)))
    b = np.linalg.eigvals(full_generator(s, eps))
    radius = np.max(np.abs(b))
    # match each eigenvalue to its nearest partner
    for lam in a:
        assert np.min(np.abs(b - lam)) <= 1e-8 * radius


def test_shifted_block_triangular_without_feedback():
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    D = np.array([[-2.0]])
    s = LtiBlockSystem(A, np.ones((2, 1)), np.zeros((1, 2)), D)
    M = shifted_lti(s, 0.25)
    assert M[:2, :2] == pytest.approx(A)
    assert M[2:, :2] == pytest.approx(np.zeros((1, 2)))
    assert M[2:, 2:] == pytest.approx(D / 0.25)


# --- thresholds -----------------------------------------------------------


def test_epsilon_star_0_examples(desk_lti):
    assert epsilon_star_0_lti(desk_lti) == pytest.approx(1 / 3)
    assert epsilon_star_0_lti(scalar(1.0, 1.0, 0.0, -1.0)) == math.inf
    assert epsilon_star_0_lti(scalar(1.0, 1.0, -3.0, -2.0)) == pytest.approx(4 * epsilon_star_0_lti(desk_lti))


def test_gain_matrix_and_threshold_desk(desk_lti):
    G = gain_matrix_lti(desk_lti, 0.1)
    assert G == pytest.approx(np.array([[-2.0, 1.0], [6.0, -7.0]]))
    assert spectral_abscissa(G) == pytest.approx(-1.0)
    assert epsilon_star_lti(desk_lti) == pytest.approx(1 / 6)
    assert epsilon_star_lti(scalar(-1.0, 0.0, 2.0, -1.0)) == math.inf


def test_threshold_ordering_on_random_instances(rng):
    for _ in range(40):
        s = random_lti(rng)
        e1, e2 = epsilon_star_0_lti(s), epsilon_star_lti(s)
        assert e2 < e1


# --- envelopes ------------------------------------------------------------


def test_envelope_initial_values(desk_lti):
    for coupling in ("displayed", "full"):
        ex, ez = envelope_lti(desk_lti, 0.1, [1.0], [0.5], [0.6], coupling=coupling)
        assert ex(0.0) == pytest.approx(0.4, abs=1e-14)
        ex, _ = envelope_lti(desk_lti, 0.1, [1.0], [0.5], [1.0], coupling=coupling)
        assert ex(0.0) == pytest.approx(0.0, abs=1e-14)
        assert np.all(ex(np.linspace(0, 60, 5)) >= 0.0)
        assert ex.asymptote == 0.0 and ez.asymptote == 0.0


def test_envelope_threshold_enforced(desk_lti):
    with pytest.raises(ThresholdError):
        envelope_lti(desk_lti, 0.4, [1.0], [0.0], [1.0])
    ex, _ = envelope_lti(desk_lti, 0.3, [1.0], [0.0], [1.0])
    assert ex(1.0) > 0


def test_projection_norm_below_general_ratio(rng):
    for _ in range(50):
        s = random_lti(rng)
        lhs = float(induced_norm(s.DinvC, s.x_norm, s.z_norm))
        rhs = float(induced_norm(s.C, s.x_norm, s.z_norm)) / abs(log_norm(s.D))
        assert lhs <= rhs * (1 + 1e-12)


def test_full_coupling_envelope_holds(rng):
    for _ in range(20):
        s = random_lti(rng)
        eps = 0.5 * epsilon_star_0_lti(s)
        eps = min(eps, 0.5 * epsilon_star_lti(s))
        x0, z0 = rng.standard_normal(s.n_x), rng.standard_normal(s.n_z)
        grid = np.linspace(0, min(15 / -log_norm(reduced_lti(s)), 60), 300)
        ex_m, ez_m = measured_errors(s, eps, x0, z0, grid)
        ex, ez = envelope_lti(s, eps, x0, z0, x0, coupling="full")
        assert np.all(ex_m <= ex(grid) * 1.01 + 1e-12)
        assert np.all(ez_m <= ez(grid) * 1.01 + 1e-12)


def test_displayed_envelope_sharper_than_autonomous(rng):
    checked = 0
    for _ in range(30):
        s = random_lti(rng)
        eps = 0.5 * min(epsilon_star_0_lti(s), epsilon_star_lti(s))
        c = autonomous_constants(s)
        if not eps < c.c_g ** 2 / (c.l_gx * c.l_fz):
            continue
        x0, z0 = rng.standard_normal(s.n_x), rng.standard_normal(s.n_z)
        grid = np.linspace(0, min(15 / c.c_f, 60), 300)
        gx, gz = envelope_autonomous(c, eps, np.linalg.norm(z0 + s.DinvC @ x0), np.linalg.norm(reduced_lti(s) @ x0))
        ex, ez = envelope_lti(s, eps, x0, z0, x0)
        assert np.all(ex(grid) <= gx(grid) + 1e-9)
        assert np.all(ez(grid) <= gz(grid) + 1e-9)
        checked += 1
    assert checked >= 10


# --- contraction ----------------------------------------------------------


def test_certificate_desk(desk_lti):
    cert = contraction_certificate(desk_lti, 0.1)
    assert cert.rate == pytest.approx(1.0)
    assert cert.validated
    assert cert.fitted_rate >= 0.95
    assert cert.weights.N1 / cert.weights.N2 == pytest.approx(math.sqrt(6.0))


def test_certificate_decoupled():
    s = scalar(-2.0, 0.0, 0.0, -1.0)
    cert = contraction_certificate(s, 0.5)
    assert cert.rate == pytest.approx(2.0)


def test_certificate_errors(desk_lti):
    with pytest.raises(ThresholdError, match="not Hurwitz"):
        contraction_certificate(desk_lti, 0.3)
    with pytest.raises(ValidationError):
        contraction_certificate(scalar(1.0, 0.0, 0.0, -1.0), 0.1)


def test_certificate_rates_on_random_instances(rng):
    for k in range(10):
        s = random_lti(rng, max_dim=3)
        cert = contraction_certificate(s, 0.5 * epsilon_star_lti(s), seed=k)
        assert cert.fitted_rate >= cert.rate * 0.95


# --- gain matrix template -------------------------------------------------


def test_gain_check_examples():
    p = GainMatrixParams(1.0, 1.0, 1.0, 1.0, d22=1.0)
    chk = hurwitz_gain_check(p, 0.4)
    assert chk.threshold == pytest.approx(0.5)
    assert chk.verdict == BELOW_THRESHOLD_HURWITZ
    assert p.matrix(0.4) == pytest.approx(np.array([[-1.0, 1.0], [1.0, -1.5]]))
    assert chk.hurwitz
    assert hurwitz_gain_check(p, 0.6).verdict == ABOVE_THRESHOLD_UNKNOWN


def test_gain_check_determinant_term_alone():
    # with d22 pushed to its smallest admissible size only the determinant term binds
    p = GainMatrixParams(2.0, 1.0, 3.0, 1.5, d22=1e-300)
    chk = hurwitz_gain_check(p, 0.1)
    assert chk.terms["a11/d11"] == math.inf
    assert chk.threshold == pytest.approx(2.0 * 1.5 / 3.0)


def test_gain_check_rejects_bad_signs():
    with pytest.raises(ValidationError):
        GainMatrixParams(-1.0, 1.0, 1.0, 1.0, d22=1.0)
    with pytest.raises(ValidationError):
        GainMatrixParams(1.0, 1.0, 1.0, 1.0, d22=1.0, d11=-0.1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.05, 5.0), min_size=5, max_size=5), st.floats(0.0, 2.0), st.floats(0.0, 2.0),
       st.floats(0.01, 0.99))
def test_exact_threshold_is_sufficient_and_tight(v, d11, d21, frac):
    p = GainMatrixParams(*v, d11=d11, d21=d21)
    sound = hurwitz_gain_check(p, 1.0).sound_threshold
    below = hurwitz_gain_check(p, frac * sound)
    assert below.hurwitz == (np.max(np.linalg.eigvals(p.matrix(frac * sound)).real) < 0)
    assert below.hurwitz
    if math.isfinite(sound):
        assert not hurwitz_gain_check(p, sound * (1 + 1e-6)).hurwitz


def test_displayed_threshold_can_certify_unstable_matrix():
    # a11 > a12 makes the displayed determinant term exceed the exact root
    p = GainMatrixParams(4.0, 1.0, 1.0, 1.0, d22=1.0)
    chk = hurwitz_gain_check(p, 0.9)
    assert chk.verdict == BELOW_THRESHOLD_HURWITZ
    assert not chk.hurwitz
    assert chk.sound_threshold == pytest.approx(0.8)


# --- implication diagram --------------------------------------------------


def test_diagram_desk(desk_lti):
    rep = diagram_check(desk_lti, [0.01, 0.05, 0.1])
    assert (rep.p11, rep.p21) == (False, True)
    assert rep.hurwitz == [True, True, True]
    assert rep.ok


def test_diagram_identity_blocks():
    s = LtiBlockSystem(-np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), -np.eye(2))
    rep = diagram_check(s, [0.01, 0.1, 1.0, 10.0])
    assert rep.p11 and all(rep.hurwitz) and rep.ok


def test_diagram_no_premise():
    s = scalar(-1.0, 2.0, 2.0, -1.0)
    assert reduced_lti(s)[0, 0] == pytest.approx(3.0)
    rep = diagram_check(s, [0.01, 0.1])
    assert not rep.p11 and not rep.p21
    assert rep.counterexamples == []


def test_diagram_random_instances_have_no_counterexamples(rng):
    for _ in range(30):
        s = random_lti(rng)
        rep = diagram_check(s, np.geomspace(1e-3, 10, 25))
        assert rep.counterexamples == []
        assert rep.ordering_ok is not False
