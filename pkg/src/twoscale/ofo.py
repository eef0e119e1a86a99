"""Online feedback optimisation: a stable LTI plant driven by a gradient-flow
controller.

Plant (fast, time constant eps):  eps z' = A z + B u + E w_z
Controller (slow):                u' = -grad phi(u) - G^T grad psi(z)

At steady state ``z = G u + H w`` with ``G = -A^{-1} B`` and
``H = -A^{-1} E``, so the slow flow chases the minimiser of
``phi(u) + psi(G u + H w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .bounds import BoundEnvelope, envelope_x_general, envelope_z_general
from .errors import NumericalError, ThresholdError, ValidationError
from .specnorm import L2, NormKind, induced_norm, log_norm, spectral_abscissa, vector_norm
from .sysmodel import ConstantsTable, DisturbanceSignal, TwoTimeScaleSystem, _vec, zero_signal

__all__ = [
    "OfoProblem",
    "OfoDerived",
    "derived",
    "steady_state",
    "closed_loop",
    "optimizer",
    "ofo_constants",
    "epsilon_star_ofo",
    "tracking_bounds",
    "tracking_envelopes",
    "quadratic_problem",
]


@dataclass(frozen=True)
class OfoProblem:
    """Plant matrices, cost gradients and their curvature constants.

    ``nu`` is the strong-convexity modulus of ``phi``, ``l_phi`` and
    ``l_psi`` the smoothness constants of ``phi`` and ``psi``.  ``phi`` and
    ``psi`` (cost values) are optional and only used for gradient checks.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    grad_phi: Callable
    grad_psi: Callable
    nu: float
    l_phi: float
    l_psi: float
    w_z: DisturbanceSignal
    epsilon: float
    phi: Optional[Callable] = None
    psi: Optional[Callable] = None
    norm: NormKind = L2

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValidationError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or E.shape[0] != n:
            raise ValidationError("B and E must have as many rows as A")
        if E.shape[1] != self.w_z.dimension:
            raise ValidationError(f"E has {E.shape[1]} columns but w_z has dimension {self.w_z.dimension}")
        if spectral_abscissa(A) >= 0:
            raise ValidationError("plant matrix A must be Hurwitz")
        if not self.nu > 0:
            raise ValidationError("strong convexity modulus nu must be positive")
        if self.nu > self.l_phi:
            raise ValidationError("nu cannot exceed the smoothness constant l_phi")
        if self.l_psi < 0:
            raise ValidationError("l_psi must be nonnegative")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.norm.weight is not None:
            raise ValidationError("OFO problems use a plain (unweighted) norm on u, z and w")
        for name, M in (("A", A), ("B", B), ("E", E)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_z(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class OfoDerived:
    G: np.ndarray
    H: np.ndarray
    ell: float


def derived(p: OfoProblem) -> OfoDerived:
    try:
        G = -np.linalg.solve(p.A, p.B)
        H = -np.linalg.solve(p.A, p.E)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("plant matrix A is singular") from exc
    ell = p.l_phi + matrix_norm_rect(G) ** 2 * p.l_psi
    return OfoDerived(G, H, ell)


def matrix_norm_rect(M, norm: NormKind = L2) -> float:
    """Induced norm of a possibly rectangular matrix, same plain norm on both sides."""
    return float(induced_norm(np.atleast_2d(np.asarray(M, dtype=float)), norm, norm))


def steady_state(p: OfoProblem, u, w) -> np.ndarray:
    """``G u + H w``, the plant equilibrium for input ``u`` and disturbance ``w``."""
    u = _vec(u, p.n_u)
    w = _vec(w, p.E.shape[1])
    return -np.linalg.solve(p.A, p.B @ u + p.E @ w)


def closed_loop(p: OfoProblem) -> TwoTimeScaleSystem:
    """The interconnection in two-time-scale form (slow ``u``, fast ``z``)."""
    d = derived(p)
    G, H, A, B, E = d.G, d.H, p.A, p.B, p.E
    Gt = G.T

    def f(t, u, z, w_x, eps):
        return -np.asarray(p.grad_phi(u), dtype=float) - Gt @ np.asarray(p.grad_psi(z), dtype=float)

    def g(u, z, w_z, eps):
        return A @ z + B @ u + E @ w_z

    return TwoTimeScaleSystem(
        f=f,
        g=g,
        n_x=p.n_u,
        n_z=p.n_z,
        w_x_sig=zero_signal(1),
        w_z_sig=p.w_z,
        epsilon=p.epsilon,
        x_norm=p.norm,
        z_norm=p.norm,
        zstar=lambda u, w, eps: G @ u + H @ w,
        dg_dz=lambda u, z, w, eps: A,
        zstar_jacobians=lambda u, w: (G, H),
        name="ofo-closed-loop",
    )


def open_loop_gradient_flow(p: OfoProblem) -> Callable:
    """``u -> -grad phi(u) - G^T grad psi(G u + H w)``."""
    d = derived(p)

    def flow(u, w):
        return -np.asarray(p.grad_phi(u), dtype=float) - d.G.T @ np.asarray(p.grad_psi(d.G @ u + d.H @ w), dtype=float)

    return flow


def optimizer(p: OfoProblem, w, tol: float = 1e-10, u0=None, max_iter: int = 1_000_000) -> np.ndarray:
    """Minimiser of ``phi(u) + psi(G u + H w)`` by gradient descent with step ``1/ell``.

    Stops once the gradient norm is at most ``tol``.
    """
    d = derived(p)
    w = _vec(w, p.E.shape[1])
    u = np.zeros(p.n_u) if u0 is None else _vec(u0, p.n_u).copy()
    step = 1.0 / d.ell
    Hw = d.H @ w
    for _ in range(max_iter):
        grad = np.asarray(p.grad_phi(u), dtype=float) + d.G.T @ np.asarray(p.grad_psi(d.G @ u + Hw), dtype=float)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient in optimizer")
        if np.linalg.norm(grad) <= tol:
            return u
        u = u - step * grad
    raise NumericalError(f"optimizer did not reach gradient norm {tol:.1e} in {max_iter} iterations")


def ofo_constants(p: OfoProblem) -> ConstantsTable:
    """Constants of the closed loop for the generic bounds.

    ``c_f = nu``, ``c_g = -mu(A)``, ``l_gx = |B|``, ``l_gw = |E|``,
    ``l_feps = l_psi |G|``, ``l_f_wz = |G| l_psi |H|``, and the slow field's
    ``z``-dependence ``-G^T grad psi(z)`` gives ``l_fz = |G^T| l_psi``.  The
    controller is autonomous, has no ``w_x`` input, and the plant does not
    depend on eps, so ``l_ft = l_fw = l_geps = 0``.
    """
    d = derived(p)
    mu = log_norm(p.A, p.norm)
    if mu >= 0:
        raise ValidationError(f"log-norm of A is {mu:.6g} >= 0 in the chosen norm")
    nG = matrix_norm_rect(d.G, p.norm)
    nGt = matrix_norm_rect(d.G.T, p.norm)
    nH = matrix_norm_rect(d.H, p.norm)
    return ConstantsTable(
        c_f=p.nu,
        c_g=-mu,
        l_fx=p.l_phi,
        l_fz=nGt * p.l_psi,
        l_ft=0.0,
        l_fw=0.0,
        l_feps=p.l_psi * nG,
        l_gx=matrix_norm_rect(p.B, p.norm),
        l_gw=matrix_norm_rect(p.E, p.norm),
        l_geps=0.0,
        l_zstar_w=0.0,
        l_f_wz=nG * p.l_psi * nH,
    )


def _coupling(p: OfoProblem) -> float:
    d = derived(p)
    return matrix_norm_rect(np.linalg.solve(p.A, p.B @ d.G.T), p.norm)


def epsilon_star_ofo(p: OfoProblem) -> float:
    """``-mu(A) / (|A^{-1} B G^T| l_psi)``; ``inf`` when the denominator vanishes."""
    mu = log_norm(p.A, p.norm)
    if mu >= 0:
        raise ValidationError(f"log-norm of A is {mu:.6g} >= 0; no admissible eps")
    if p.l_psi == 0:
        return math.inf
    k = _coupling(p)
    if k == 0:
        return math.inf
    return -mu / (k * p.l_psi)


def tracking_bounds(p: OfoProblem) -> Tuple[float, float]:
    """Asymptotic tracking radii ``(u_bound, z_bound)``.

    ``u_bound = eps a wbar / (nu (-mu(A) - eps k l_psi)) + a wbar / nu^2`` and
    ``z_bound = eps |H| wbar / (-mu(A) - eps k l_psi) (1 + a / nu)``, with
    ``a = |G| l_psi |H|`` and ``k = |A^{-1} B G^T|``.
    """
    thr = epsilon_star_ofo(p)
    eps = p.epsilon
    if eps >= thr:
        raise ThresholdError(f"eps = {eps:.6g} is not below the tracking threshold {thr:.6g}", eps=eps, threshold=thr)
    d = derived(p)
    mu = log_norm(p.A, p.norm)
    nG = matrix_norm_rect(d.G, p.norm)
    nH = matrix_norm_rect(d.H, p.norm)
    a = nG * p.l_psi * nH
    wbar = p.w_z.derivative_bound
    den = -mu - eps * _coupling(p) * p.l_psi
    u_bound = eps * a / (p.nu * den) * wbar + a / p.nu ** 2 * wbar
    z_bound = eps * nH * wbar / den * (1.0 + a / p.nu)
    return u_bound, z_bound


def tracking_envelopes(p: OfoProblem, u0, z0) -> Tuple[BoundEnvelope, BoundEnvelope]:
    """Derived transient envelopes for ``|u - u*(w(t))|`` and
    ``|z - z_eq(u*(w(t)), w(t))|``.

    Built by the triangle inequality through the reduced (open-loop) flow:
    the generic slow/fast envelopes bound the distance to ``u_r`` and
    ``z*(u_r)``, and the reduced flow, being ``nu``-contracting, tracks the
    moving minimiser within ``e^{-nu t}|u0 - u*(w(0))| + (a wbar/nu^2)(1 - e^{-nu t})``.
    These are reconstructions, not closed forms from the literature.
    """
    c = ofo_constants(p)
    d = derived(p)
    u0 = _vec(u0, p.n_u)
    z0 = _vec(z0, p.n_z)
    w0 = p.w_z.value(0.0)
    y0 = vector_norm(z0 - (d.G @ u0 + d.H @ w0), p.norm)
    fred0 = vector_norm(open_loop_gradient_flow(p)(u0, w0), p.norm)
    wbar = p.w_z.derivative_bound
    ex = envelope_x_general(c, p.epsilon, 0.0, y0, fred0, 0.0, wbar)
    ez = envelope_z_general(c, p.epsilon, 0.0, y0, fred0, 0.0, wbar)
    ustar0 = optimizer(p, w0)
    r0 = vector_norm(u0 - ustar0, p.norm)
    nG = matrix_norm_rect(d.G, p.norm)
    a = nG * p.l_psi * matrix_norm_rect(d.H, p.norm)
    drift = a * wbar / p.nu ** 2
    nu = p.nu

    def reduced_gap(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-nu * t) * r0 + drift * (1.0 - np.exp(-nu * t))

    def eu(t):
        return ex.eval(t) + reduced_gap(t)

    def ezz(t):
        return ez.eval(t) + nG * reduced_gap(t)

    return (
        BoundEnvelope(eu, ex.asymptote + drift, ex.case_tag, "u-derived", {"reduced_drift": drift}),
        BoundEnvelope(ezz, ez.asymptote + nG * drift, ez.case_tag, "z-derived", {"reduced_drift": drift}),
    )


def quadratic_problem(A, B, E, q_phi=1.0, q_psi=1.0, u_ref=None, w_z=None, epsilon=0.1) -> OfoProblem:
    """Problem with ``phi = q_phi/2 |u - u_ref|^2`` and ``psi = q_psi/2 |z|^2``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    m = B.shape[1]
    ref = np.zeros(m) if u_ref is None else _vec(u_ref, m)
    if w_z is None:
        w_z = zero_signal(E.shape[1])
    return OfoProblem(
        A=A,
        B=B,
        E=E,
        grad_phi=lambda u: q_phi * (np.asarray(u) - ref),
        grad_psi=lambda z: q_psi * np.asarray(z),
        nu=q_phi,
        l_phi=q_phi,
        l_psi=q_psi,
        w_z=w_z,
        epsilon=epsilon,
        phi=lambda u: 0.5 * q_phi * float(np.sum((np.asarray(u) - ref) ** 2)),
        psi=lambda z: 0.5 * q_psi * float(np.sum(np.asarray(z) ** 2)),
    )
