"""Vector norms, induced matrix norms and logarithmic norms.

Four norm families are supported: the 1-, 2- and infinity-norms and the
weighted 2-norm ``|x|_R = |R x|_2`` for an invertible ``R``.  The log-norm
(matrix measure) of ``A`` is the one-sided derivative of ``|I + hA|`` at
``h = 0``; every family here has a closed form for it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import NumericalError, ValidationError

__all__ = [
    "NormKind",
    "L1",
    "L2",
    "LINF",
    "weighted_l2",
    "vector_norm",
    "matrix_norm",
    "log_norm",
    "induced_norm",
    "InducedNorm",
    "estimate_induced_norm",
    "spectral_abscissa",
    "CompositeWeight",
    "perron_weights",
    "composite_norm",
]

_TAGS = ("L1", "L2", "Linf", "WeightedL2")

# Largest dimension for which the convex maximisation behind an induced
# cross-norm is done by exhaustive vertex enumeration.
_MAX_ENUM_DIM = 12
_SPHERE_SAMPLES = 4096
_ASCENT_STEPS = 20


@dataclass(frozen=True, eq=False)
class NormKind:
    """A norm selection on R^n.

    ``weight`` is only used by the ``WeightedL2`` tag, where the norm is
    ``|R x|_2``.
    """

    tag: str
    weight: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValidationError(f"unknown norm tag {self.tag!r}; expected one of {_TAGS}")
        if self.tag == "WeightedL2":
            if self.weight is None:
                raise ValidationError("WeightedL2 needs a weight matrix")
            R = np.array(self.weight, dtype=float, copy=True)
            if R.ndim != 2 or R.shape[0] != R.shape[1]:
                raise ValidationError(f"weight matrix must be square, got shape {R.shape}")
            cond = np.linalg.cond(R)
            if not np.isfinite(cond) or cond > 1e14:
                raise ValidationError("weight matrix is singular or numerically singular")
            R.setflags(write=False)
            object.__setattr__(self, "weight", R)
        elif self.weight is not None:
            raise ValidationError(f"{self.tag} takes no weight matrix")

    def __eq__(self, other):
        if not isinstance(other, NormKind) or other.tag != self.tag:
            return False
        if self.tag != "WeightedL2":
            return True
        return self.weight.shape == other.weight.shape and bool(np.all(self.weight == other.weight))

    def __hash__(self):
        if self.tag != "WeightedL2":
            return hash(self.tag)
        return hash((self.tag, self.weight.tobytes()))

    def __str__(self):
        return self.tag

    @property
    def dim(self) -> Optional[int]:
        return None if self.weight is None else self.weight.shape[0]


L1 = NormKind("L1")
L2 = NormKind("L2")
LINF = NormKind("Linf")


def weighted_l2(R) -> NormKind:
    return NormKind("WeightedL2", np.asarray(R, dtype=float))


def _as_matrix(A, name="matrix"):
    M = np.atleast_2d(np.asarray(A, dtype=float))
    if M.ndim != 2:
        raise ValidationError(f"{name} must be two-dimensional, got ndim={M.ndim}")
    return M


def _as_square(A, name="matrix"):
    M = _as_matrix(A, name)
    if M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    return M


def _check_weight_dim(kind: NormKind, n: int):
    if kind.tag == "WeightedL2" and kind.dim != n:
        raise ValidationError(f"weight matrix is {kind.dim}x{kind.dim} but the space has dimension {n}")


def vector_norm(v, kind: NormKind = L2) -> float:
    v = np.asarray(v, dtype=float).ravel()
    if kind.tag == "L1":
        return float(np.sum(np.abs(v)))
    if kind.tag == "L2":
        return float(np.linalg.norm(v))
    if kind.tag == "Linf":
        return float(np.max(np.abs(v))) if v.size else 0.0
    _check_weight_dim(kind, v.size)
    return float(np.linalg.norm(kind.weight @ v))


def _similar(A, R):
    # R A R^{-1} without forming the inverse
    return np.linalg.solve(R.T, (R @ A).T).T


def matrix_norm(A, kind: NormKind = L2) -> float:
    """Norm of a square matrix induced by ``kind`` on both sides."""
    A = _as_square(A)
    if kind.tag == "L1":
        return float(np.max(np.sum(np.abs(A), axis=0)))
    if kind.tag == "Linf":
        return float(np.max(np.sum(np.abs(A), axis=1)))
    if kind.tag == "L2":
        return float(np.linalg.norm(A, 2))
    _check_weight_dim(kind, A.shape[0])
    return float(np.linalg.norm(_similar(A, kind.weight), 2))


def log_norm(A, kind: NormKind = L2) -> float:
    """Logarithmic norm of a square matrix.

    >>> log_norm([[-2.0, 1.0], [0.0, -3.0]], LINF)
    -1.0
    """
    A = _as_square(A)
    if not np.all(np.isfinite(A)):
        raise NumericalError("log_norm got non-finite entries")
    diag = np.diag(A)
    off = np.abs(A) - np.diag(np.abs(diag))
    if kind.tag == "L1":
        return float(np.max(diag + off.sum(axis=0)))
    if kind.tag == "Linf":
        return float(np.max(diag + off.sum(axis=1)))
    if kind.tag == "WeightedL2":
        _check_weight_dim(kind, A.shape[0])
        A = _similar(A, kind.weight)
    sym = 0.5 * (A + A.T)
    return float(np.linalg.eigvalsh(sym)[-1])


class InducedNorm(float):
    """A float that remembers how it was obtained.

    ``method`` is one of ``"closed-form"``, ``"vertex-enumeration"`` or
    ``"estimated"``; only the last one is a lower bound rather than exact.
    """

    method: str

    def __new__(cls, value, method):
        obj = super().__new__(cls, value)
        obj.method = method
        return obj

    def __reduce__(self):
        return (InducedNorm, (float(self), self.method))


def _dual_tag(tag):
    return {"L1": "Linf", "L2": "L2", "Linf": "L1"}[tag]


def _plain_norm_rows(X, tag):
    # norm of each row of X, for plain tags
    if tag == "L1":
        return np.sum(np.abs(X), axis=1)
    if tag == "L2":
        return np.linalg.norm(X, axis=1)
    return np.max(np.abs(X), axis=1)


def _sign_vertices(n):
    # half of {-1, 1}^n suffices because the objective is even
    if n == 0:
        return np.zeros((1, 0))
    rest = np.array(list(itertools.product((-1.0, 1.0), repeat=n - 1)), dtype=float).reshape(2 ** (n - 1), n - 1)
    return np.hstack([np.ones((rest.shape[0], 1)), rest])


def _unit_sphere_sample(n, count):
    # deterministic Halton points pushed through the normal inverse CDF
    if n == 1:
        return np.ones((1, 1))
    sampler = qmc.Halton(d=n, scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    g = ndtri(u)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g


def _ball_maximiser(grad, tag):
    # argmax of <grad, v> over the unit ball of the plain norm ``tag``
    if tag == "L2":
        ng = np.linalg.norm(grad)
        return grad / ng if ng > 0 else grad
    if tag == "Linf":
        return np.where(grad >= 0, 1.0, -1.0)
    k = int(np.argmax(np.abs(grad)))
    v = np.zeros_like(grad)
    v[k] = 1.0 if grad[k] >= 0 else -1.0
    return v


def _subgradient(y, tag):
    # a subgradient of the plain norm ``tag`` at y
    if tag == "L1":
        return np.sign(y)
    if tag == "L2":
        ny = np.linalg.norm(y)
        return y / ny if ny > 0 else y
    k = int(np.argmax(np.abs(y)))
    s = np.zeros_like(y)
    s[k] = np.sign(y[k])
    return s


def _estimate_cross(F, from_tag, to_tag):
    """Sampled lower estimate of max |F v|_to over |v|_from = 1.

    Sphere points are rescaled onto the unit sphere of the source norm and
    the best few are refined by ascent: each step jumps to the ball point
    that maximises the linearisation of the objective.  The objective is
    convex, so every step is non-decreasing.
    """
    n = F.shape[1]
    pts = _unit_sphere_sample(n, _SPHERE_SAMPLES)
    pts = pts / _plain_norm_rows(pts, from_tag)[:, None]
    vals = _plain_norm_rows(pts @ F.T, to_tag)
    best = float(np.max(vals))
    for idx in np.argsort(vals)[::-1][:8]:
        v = pts[idx]
        cur = float(vals[idx])
        for _ in range(_ASCENT_STEPS):
            trial = _ball_maximiser(F.T @ _subgradient(F @ v, to_tag), from_tag)
            val = float(_plain_norm_rows((F @ trial)[None, :], to_tag)[0])
            if val <= cur * (1 + 1e-15):
                break
            v, cur = trial, val
        best = max(best, cur)
    return best


def induced_norm(F, from_kind: NormKind = L2, to_kind: NormKind = L2) -> InducedNorm:
    """Operator norm of ``F`` from the ``from_kind`` space into ``to_kind``.

    Closed forms cover equal plain norms, any source in L1 (columns are the
    ball's vertices) and any target in Linf (rows against the dual norm).
    The remaining pairs are convex maximisations over a polytope or a
    sphere; small ones are enumerated exactly, larger ones are estimated by
    deterministic sampling plus a short projected ascent.
    """
    F = _as_matrix(F, "F")
    m, n = F.shape
    _check_weight_dim(from_kind, n)
    _check_weight_dim(to_kind, m)
    if not np.all(np.isfinite(F)):
        raise NumericalError("induced_norm got non-finite entries")
    if F.size == 0 or not np.any(F):
        return InducedNorm(0.0, "closed-form")

    # absorb weights: |R2 F v|_2 over |R1 v|_2 = 1  ->  R2 F R1^{-1} between 2-norms
    src, dst = from_kind.tag, to_kind.tag
    if src == "WeightedL2":
        F = np.linalg.solve(from_kind.weight.T, F.T).T
        src = "L2"
    if dst == "WeightedL2":
        F = to_kind.weight @ F
        dst = "L2"

    if src == dst == "L2":
        return InducedNorm(float(np.linalg.norm(F, 2)), "closed-form")
    if src == "L1":
        return InducedNorm(float(np.max(_plain_norm_rows(F.T, dst))), "closed-form")
    if dst == "Linf":
        return InducedNorm(float(np.max(_plain_norm_rows(F, _dual_tag(src)))), "closed-form")

    # left: (L2 -> L1), (Linf -> L1), (Linf -> L2)
    if src == "Linf" and n <= _MAX_ENUM_DIM:
        V = _sign_vertices(n)
        return InducedNorm(float(np.max(_plain_norm_rows(V @ F.T, dst))), "vertex-enumeration")
    if src == "L2" and dst == "L1" and m <= _MAX_ENUM_DIM:
        # max over the 2-ball of |F v|_1 = max over sign vectors s of |F^T s|_2
        S = _sign_vertices(m)
        return InducedNorm(float(np.max(np.linalg.norm(S @ F, axis=1))), "vertex-enumeration")
    return InducedNorm(_estimate_cross(F, src, dst), "estimated")


def estimate_induced_norm(F, from_kind: NormKind, to_kind: NormKind) -> InducedNorm:
    """Sampled estimate only, whatever closed form might exist.

    Handy as an independent cross-check; weighted norms are absorbed into
    the matrix first.
    """
    F = _as_matrix(F, "F")
    src, dst = from_kind.tag, to_kind.tag
    if src == "WeightedL2":
        F = np.linalg.solve(from_kind.weight.T, F.T).T
        src = "L2"
    if dst == "WeightedL2":
        F = to_kind.weight @ F
        dst = "L2"
    if not np.any(F):
        return InducedNorm(0.0, "estimated")
    return InducedNorm(_estimate_cross(F, src, dst), "estimated")


def spectral_abscissa(A) -> float:
    """Largest real part over the eigenvalues of ``A``."""
    A = _as_square(A)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue solver failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise NumericalError("eigenvalue solver returned non-finite values")
    return float(np.max(ev.real))


@dataclass(frozen=True)
class CompositeWeight:
    N1: float
    N2: float

    def __post_init__(self):
        if not (self.N1 > 0 and self.N2 > 0) or not (math.isfinite(self.N1) and math.isfinite(self.N2)):
            raise ValidationError(f"composite weights must be positive and finite, got ({self.N1}, {self.N2})")

    @property
    def ratio(self) -> float:
        return self.N2 / self.N1

    def squared(self) -> "CompositeWeight":
        return CompositeWeight(self.N1 * self.N1, self.N2 * self.N2)


def perron_weights(G) -> CompositeWeight:
    """Weights ``N_i = sqrt(w_i / v_i)`` from the dominant eigenpair of a 2x2
    irreducible Metzler Hurwitz matrix.

    ``v`` and ``w`` are the right and left eigenvectors of the dominant
    eigenvalue, both taken entrywise positive.  Only the ratio matters, so
    the pair is scaled to have geometric mean 1.

    The log-norm of ``G`` equals its spectral abscissa in the weighted
    2-norm ``sqrt(N_1^2 a^2 + N_2^2 b^2)``, i.e. :func:`composite_norm`
    with :meth:`CompositeWeight.squared`.  With ``N`` itself as the
    quadratic weights the log-norm is in general larger.
    """
    G = _as_square(G, "G")
    if G.shape != (2, 2):
        raise ValidationError(f"perron_weights needs a 2x2 matrix, got {G.shape}")
    a, b = G[0]
    c, d = G[1]
    if b < 0 or c < 0:
        raise ValidationError("matrix is not Metzler (negative off-diagonal entry)")
    if b == 0 or c == 0:
        raise ValidationError("matrix is reducible (zero off-diagonal entry)")
    if spectral_abscissa(G) >= 0:
        raise ValidationError("matrix is not Hurwitz")
    # dominant root of the characteristic polynomial; the discriminant is
    # (a - d)^2 + 4bc > 0, so it is real and simple
    gap = math.sqrt((a - d) ** 2 + 4.0 * b * c)
    shift = 0.5 * ((d - a) + gap)  # lambda_max - a, strictly positive
    v = np.array([b, shift])
    w = np.array([c, shift])
    N = np.sqrt(w / v)
    N = N / math.sqrt(N[0] * N[1])
    return CompositeWeight(float(N[0]), float(N[1]))


def composite_norm(x_norm: float, z_norm: float, N: CompositeWeight) -> float:
    """``sqrt(N1 x^2 + N2 z^2)`` for two already-normed blocks."""
    if x_norm < 0 or z_norm < 0:
        raise ValidationError("composite_norm takes nonnegative block norms")
    return math.sqrt(N.N1 * x_norm * x_norm + N.N2 * z_norm * z_norm)
