import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from twoscale.errors import NumericalError, ValidationError
from twoscale.specnorm import (
    L1,
    L2,
    LINF,
    CompositeWeight,
    NormKind,
    composite_norm,
    estimate_induced_norm,
    induced_norm,
    log_norm,
    matrix_norm,
    perron_weights,
    spectral_abscissa,
    vector_norm,
    weighted_l2,
)

PLAIN = (L1, L2, LINF)
entries = st.floats(-3.0, 3.0, allow_nan=False)


def square(n_max=4):
    return st.integers(1, n_max).flatmap(lambda n: arrays(np.float64, (n, n), elements=entries))


def difference_quotient(A, kind, h):
    n = A.shape[0]
    return (matrix_norm(np.eye(n) + h * A, kind) - 1.0) / h


def left_right_dominant(G):
    # independent eigen-decomposition oracle, entrywise positive scaling
    ev, V = np.linalg.eig(G)
    k = int(np.argmax(ev.real))
    v = np.abs(V[:, k].real)
    evl, W = np.linalg.eig(G.T)
    w = np.abs(W[:, int(np.argmax(evl.real))].real)
    return v, w


# --- log_norm -------------------------------------------------------------


def test_log_norm_negative_identity_l2():
    assert log_norm(-np.eye(2), L2) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("kind, expected", [(LINF, -1.0), (L1, -2.0)])
def test_log_norm_triangular_against_difference_quotient(kind, expected):
    A = np.array([[-2.0, 1.0], [0.0, -3.0]])
    q4 = difference_quotient(A, kind, 1e-4)
    q6 = difference_quotient(A, kind, 1e-6)
    assert abs(q4 - q6) < 1e-3
    assert log_norm(A, kind) == pytest.approx(q6, abs=1e-3)
    assert log_norm(A, kind) == expected


def test_weighted_log_norm_is_similarity():
    R = np.array([[2.0, 0.5], [0.0, 1.0]])
    A = np.array([[-1.0, 4.0], [0.0, -2.0]])
    direct = np.linalg.eigvalsh(0.5 * ((R @ A @ np.linalg.inv(R)) + (R @ A @ np.linalg.inv(R)).T))[-1]
    assert log_norm(A, weighted_l2(R)) == pytest.approx(direct, rel=1e-12)


def test_log_norm_rejects_bad_input():
    with pytest.raises(ValidationError):
        log_norm(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        weighted_l2(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(ValidationError):
        log_norm(np.eye(3), weighted_l2(np.eye(2)))
    with pytest.raises(NumericalError):
        log_norm(np.array([[np.nan]]))


@settings(max_examples=60, deadline=None)
@given(square(), st.sampled_from(["L1", "L2", "Linf", "W"]), st.integers(0, 2**31))
def test_log_norm_matches_difference_quotient(A, tag, seed):
    n = A.shape[0]
    if tag == "W":
        r = np.random.default_rng(seed)
        kind = weighted_l2(np.diag(r.uniform(0.5, 2.0, n)))
    else:
        kind = NormKind(tag)
    h = 1e-6
    scale = 1.0 + matrix_norm(A, kind) ** 2 if tag != "W" else 1.0 + (4 * np.abs(A).max() * n) ** 2
    assert abs(difference_quotient(A, kind, h) - log_norm(A, kind)) <= 10 * h * scale


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, n), elements=entries), arrays(np.float64, (n, n), elements=entries))),
    st.sampled_from(PLAIN))
def test_log_norm_subadditive(pair, kind):
    A, B = pair
    assert log_norm(A + B, kind) <= log_norm(A, kind) + log_norm(B, kind) + 1e-9


@settings(max_examples=80, deadline=None)
@given(square(5), st.sampled_from(PLAIN))
def test_log_norm_dominates_spectral_abscissa(A, kind):
    assert log_norm(A, kind) >= spectral_abscissa(A) - 1e-9


# --- induced_norm ---------------------------------------------------------


def test_induced_norm_examples():
    assert induced_norm(np.diag([2.0, 1.0]), L2, L2) == pytest.approx(2.0)
    assert induced_norm(np.array([[3.0]]), L2, L2) == pytest.approx(3.0)
    for a in PLAIN:
        for b in PLAIN:
            r = induced_norm(np.zeros((2, 3)), a, b)
            assert r == 0.0 and r.method == "closed-form"


def test_induced_norm_dimension_mismatch():
    with pytest.raises(ValidationError):
        induced_norm(np.ones((2, 3)), weighted_l2(np.eye(2)), L2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31), st.sampled_from(PLAIN), st.sampled_from(PLAIN))
def test_induced_norm_against_sampled_estimate(m, n, seed, src, dst):
    F = np.random.default_rng(seed).standard_normal((m, n))
    exact = induced_norm(F, src, dst)
    est = estimate_induced_norm(F, src, dst)
    assert exact.method != "estimated"
    # an estimate is a lower bound; the ascent gets close on small problems
    assert est <= exact * (1 + 1e-9)
    assert est >= 0.97 * exact


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31), st.sampled_from(PLAIN), st.sampled_from(PLAIN))
def test_induced_norm_bounds_every_image(m, n, seed, src, dst):
    r = np.random.default_rng(seed)
    F = r.standard_normal((m, n))
    V = r.standard_normal((200, n))
    ratios = [vector_norm(F @ v, dst) / vector_norm(v, src) for v in V]
    assert max(ratios) <= induced_norm(F, src, dst) * (1 + 1e-12)


def test_large_cross_norm_is_flagged_estimated():
    F = np.random.default_rng(0).standard_normal((3, 14))
    assert induced_norm(F, LINF, L2).method == "estimated"


# --- spectral abscissa ----------------------------------------------------


def test_spectral_abscissa_examples():
    assert spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)
    assert spectral_abscissa(-5 * np.eye(3)) == pytest.approx(-5.0)
    # characteristic polynomial s^2 + 9s + 8 = (s + 1)(s + 8)
    assert spectral_abscissa([[-2.0, 1.0], [6.0, -7.0]]) == pytest.approx(-1.0, rel=1e-12)


# --- Perron weights -------------------------------------------------------


def test_perron_symmetric_gives_equal_weights():
    N = perron_weights([[-1.0, 1.0], [1.0, -2.0]])
    assert N.N1 == pytest.approx(N.N2, rel=1e-12)


def test_perron_desk_matrix():
    G = np.array([[-2.0, 1.0], [6.0, -7.0]])
    v, w = left_right_dominant(G)
    N = perron_weights(G)
    assert N.N2 / N.N1 == pytest.approx(math.sqrt(w[1] * v[0] / (w[0] * v[1])), rel=1e-10)
    # v = (1, 1), w = (6, 1) up to scale
    assert N.N1 / N.N2 == pytest.approx(math.sqrt(6.0), rel=1e-12)


def test_perron_rejects_bad_matrices():
    with pytest.raises(ValidationError, match="Metzler"):
        perron_weights([[-2.0, -1.0], [1.0, -2.0]])
    with pytest.raises(ValidationError, match="reducible"):
        perron_weights([[-2.0, 0.0], [1.0, -2.0]])
    with pytest.raises(ValidationError, match="Hurwitz"):
        perron_weights([[1.0, 1.0], [1.0, -2.0]])


metzler = st.tuples(
    st.floats(-5, -0.1), st.floats(0.05, 3), st.floats(0.05, 3), st.floats(-5, -0.1)
).filter(lambda t: t[0] * t[3] - t[1] * t[2] > 1e-3)


@settings(max_examples=100, deadline=None)
@given(metzler, st.floats(0.1, 10), st.floats(-2, 2))
def test_perron_invariant_under_scale_and_shift(g, c, s):
    G = np.array([[g[0], g[1]], [g[2], g[3]]])
    H = c * G + s * np.eye(2)
    if spectral_abscissa(H) >= 0:
        H = c * G
    a, b = perron_weights(G), perron_weights(H)
    assert a.N1 > 0 and a.N2 > 0
    assert b.ratio == pytest.approx(a.ratio, rel=1e-8)


@settings(max_examples=100, deadline=None)
@given(metzler)
def test_perron_weights_attain_spectral_abscissa(g):
    G = np.array([[g[0], g[1]], [g[2], g[3]]])
    N = perron_weights(G)
    W = N.squared()
    # the composite norm with quadratic weights W is |diag(sqrt W) x|_2
    kind = weighted_l2(np.diag([math.sqrt(W.N1), math.sqrt(W.N2)]))
    assert log_norm(G, kind) == pytest.approx(spectral_abscissa(G), abs=1e-9 * (1 + np.abs(G).max()))


def test_unsquared_weights_are_not_log_optimal():
    G = np.array([[-2.0, 1.0], [6.0, -7.0]])
    N = perron_weights(G)
    kind = weighted_l2(np.diag([math.sqrt(N.N1), math.sqrt(N.N2)]))
    assert log_norm(G, kind) > spectral_abscissa(G) + 0.1


# --- composite norm -------------------------------------------------------


def test_composite_norm_examples():
    assert composite_norm(3.0, 1.0, CompositeWeight(1.0, 4.0)) == pytest.approx(math.sqrt(13.0))
    assert composite_norm(0.0, 0.0, CompositeWeight(2.0, 5.0)) == 0.0
    assert composite_norm(1.0, 0.0, CompositeWeight(9.0, 1.0)) == pytest.approx(3.0)


def test_composite_norm_rejects_negative():
    with pytest.raises(ValidationError):
        composite_norm(-1.0, 0.0, CompositeWeight(1.0, 1.0))
    with pytest.raises(ValidationError):
        CompositeWeight(0.0, 1.0)
