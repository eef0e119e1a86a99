"""Linear two-time-scale systems

    x' = A x + B z,      eps z' = C x + D z.

The quasi-steady state is ``z* = -D^{-1} C x`` and the reduced model is
``x_r' = A_red x_r`` with ``A_red = A - B D^{-1} C``.  Writing
``y = z - z*(x)`` gives the shifted system

    x' = A_red x + B y
    y' = (D/eps + D^{-1} C B) y + D^{-1} C A_red x

which is similar to the full generator.  Everything quantitative here is
phrased through four scalars: the log-norms of ``A_red`` and ``D`` and a
few induced cross-norms, assembled into a 2x2 Metzler gain matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .bounds import BoundEnvelope, case_of, phi1, phi2
from .errors import NumericalError, ThresholdError, ValidationError
from .specnorm import (
    L2,
    CompositeWeight,
    NormKind,
    composite_norm,
    induced_norm,
    log_norm,
    perron_weights,
    spectral_abscissa,
    vector_norm,
)
from .sysmodel import TwoTimeScaleSystem, zero_signal

__all__ = [
    "LtiBlockSystem",
    "GainMatrixParams",
    "reduced_lti",
    "shifted_lti",
    "full_generator",
    "scaled_block",
    "epsilon_star_0_lti",
    "epsilon_star_lti",
    "envelope_lti",
    "gain_matrix_lti",
    "contraction_certificate",
    "ContractionCertificate",
    "hurwitz_gain_check",
    "GainCheck",
    "diagram_check",
    "DiagramReport",
    "BELOW_THRESHOLD_HURWITZ",
    "ABOVE_THRESHOLD_UNKNOWN",
]

BELOW_THRESHOLD_HURWITZ = "below_threshold_hurwitz"
ABOVE_THRESHOLD_UNKNOWN = "above_threshold_unknown"


def _mat(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValidationError(f"{name} must be a matrix")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True, eq=False)
class LtiBlockSystem:
    """Block matrices of a linear two-time-scale system.

    Stability of ``D`` and ``A_red`` is not checked here, only where an
    analysis needs it, so that unstable instances can still be probed.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x_norm: NormKind = L2
    z_norm: NormKind = L2

    def __post_init__(self):
        A, B, C, D = (_mat(M, n) for M, n in ((self.A, "A"), (self.B, "B"), (self.C, "C"), (self.D, "D")))
        nx, nz = A.shape[0], D.shape[0]
        if A.shape != (nx, nx) or D.shape != (nz, nz):
            raise ValidationError("A and D must be square")
        if B.shape != (nx, nz):
            raise ValidationError(f"B must be {nx}x{nz}, got {B.shape}")
        if C.shape != (nz, nx):
            raise ValidationError(f"C must be {nz}x{nx}, got {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_z(self) -> int:
        return self.D.shape[0]

    def _solve_D(self, M):
        try:
            out = np.linalg.solve(self.D, M)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("D is singular") from exc
        if np.linalg.cond(self.D) > 1e14:
            raise NumericalError("D is numerically singular")
        return out

    @property
    def DinvC(self) -> np.ndarray:
        return self._solve_D(self.C)

    @property
    def A_red(self) -> np.ndarray:
        return reduced_lti(self)

    def zstar(self, x) -> np.ndarray:
        return -self.DinvC @ np.asarray(x, dtype=float)

    def as_system(self, eps: float) -> TwoTimeScaleSystem:
        """Same dynamics as a generic two-time-scale system."""
        A, B, C, D = self.A, self.B, self.C, self.D
        K = self.DinvC
        return TwoTimeScaleSystem(
            f=lambda t, x, z, w, e: A @ x + B @ z,
            g=lambda x, z, w, e: C @ x + D @ z,
            n_x=self.n_x,
            n_z=self.n_z,
            w_x_sig=zero_signal(1),
            w_z_sig=zero_signal(1),
            epsilon=eps,
            x_norm=self.x_norm,
            z_norm=self.z_norm,
            zstar=lambda x, w, e: -K @ x,
            dg_dz=lambda x, z, w, e: D,
            zstar_jacobians=lambda x, w: (-K, np.zeros((self.n_z, 1))),
            name="lti-block",
        )


def reduced_lti(s: LtiBlockSystem) -> np.ndarray:
    """``A - B D^{-1} C``."""
    return s.A - s.B @ s.DinvC


def full_generator(s: LtiBlockSystem, eps: float) -> np.ndarray:
    """``[[A, B], [C/eps, D/eps]]``, the generator of the stacked state."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    return np.block([[s.A, s.B], [s.C / eps, s.D / eps]])


def scaled_block(s: LtiBlockSystem, eps: float) -> np.ndarray:
    """``[[eps A, eps B], [C, D]]``: eps times the full generator."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    return np.block([[eps * s.A, eps * s.B], [s.C, s.D]])


def shifted_lti(s: LtiBlockSystem, eps: float) -> np.ndarray:
    """Generator of ``(x, y)`` with ``y = z + D^{-1} C x``."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    K = s.DinvC
    Ar = s.A - s.B @ K
    return np.block([[Ar, s.B], [K @ Ar, s.D / eps + K @ s.B]])


@dataclass(frozen=True)
class _Scalars:
    mu_D: float
    mu_Ar: float
    b: float  # |B|_{z->x}
    q: float  # |D^{-1} C|_{x->z}
    m: float  # |D^{-1} C A_red|_{x->z}
    p: float  # |D^{-1} C B|_z


def _scalars(s: LtiBlockSystem) -> _Scalars:
    K = s.DinvC
    Ar = s.A - s.B @ K
    return _Scalars(
        mu_D=log_norm(s.D, s.z_norm),
        mu_Ar=log_norm(Ar, s.x_norm),
        b=float(induced_norm(s.B, s.z_norm, s.x_norm)),
        q=float(induced_norm(K, s.x_norm, s.z_norm)),
        m=float(induced_norm(K @ Ar, s.x_norm, s.z_norm)),
        p=float(induced_norm(K @ s.B, s.z_norm, s.z_norm)),
    )


def epsilon_star_0_lti(s: LtiBlockSystem) -> float:
    """``|mu(D)| / |D^{-1} C B|``, ``inf`` when the product vanishes."""
    mu_D = log_norm(s.D, s.z_norm)
    if mu_D >= 0:
        raise ValidationError(f"mu(D) = {mu_D:.6g} is not negative in the chosen norm")
    p = float(induced_norm(s.DinvC @ s.B, s.z_norm, s.z_norm))
    return math.inf if p == 0 else -mu_D / p


def epsilon_star_lti(s: LtiBlockSystem) -> float:
    """``|mu(D)| / (|B| |D^{-1} C A_red| / |mu(A_red)| + |D^{-1} C B|)``."""
    sc = _scalars(s)
    if sc.mu_D >= 0:
        raise ValidationError(f"mu(D) = {sc.mu_D:.6g} is not negative in the chosen norm")
    if sc.mu_Ar >= 0:
        raise ValidationError(f"mu(A_red) = {sc.mu_Ar:.6g} is not negative in the chosen norm")
    den = sc.b * sc.m / (-sc.mu_Ar) + sc.p
    return math.inf if den == 0 else -sc.mu_D / den


def gain_matrix_lti(s: LtiBlockSystem, eps: float) -> np.ndarray:
    """Scalar 2x2 Metzler majorant of the shifted generator:

        [[mu(A_red),             |B|_{z->x}],
         [|D^{-1} C A_red|,      mu(D)/eps + |D^{-1} C B|]]
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    sc = _scalars(s)
    return np.array([[sc.mu_Ar, sc.b], [sc.m, sc.mu_D / eps + sc.p]])


def _lti_prereqs(s: LtiBlockSystem, eps: float) -> _Scalars:
    if not eps > 0:
        raise ValidationError("eps must be positive")
    sc = _scalars(s)
    if sc.mu_D >= 0:
        raise ValidationError(f"mu(D) = {sc.mu_D:.6g} is not negative; choose another norm or check D")
    if sc.mu_Ar >= 0:
        raise ValidationError(f"mu(A_red) = {sc.mu_Ar:.6g} is not negative; choose another norm or check A_red")
    thr = -sc.mu_D / sc.p if sc.p > 0 else math.inf
    if eps >= thr:
        raise ThresholdError(f"eps = {eps:.6g} is not below |mu(D)|/|D^-1 C B| = {thr:.6g}", eps=eps, threshold=thr)
    return sc


def _augmented_flow(Gamma, forcing, decay, start, t):
    # solves u' = Gamma u + forcing * e^{-decay t} e_2 with u(0) = start
    aug = np.zeros((3, 3))
    aug[:2, :2] = Gamma
    aug[1, 2] = forcing
    aug[2, 2] = -decay
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.size, 2))
    v0 = np.array([start[0], start[1], 1.0])
    for i, ti in enumerate(t.ravel()):
        out[i] = (expm(aug * ti) @ v0)[:2]
    if not np.all(np.isfinite(out)):
        raise NumericalError("comparison system overflowed")
    return out


def envelope_lti(s: LtiBlockSystem, eps: float, x0, z0, xr0, coupling: str = "displayed"):
    """Envelopes for ``|x(t) - x_r(t)|`` and ``|z(t) - z*(x_r(t))|``.

    With ``e = x - x_r`` and ``y = z - z*(x)`` the norms obey

        D+|e| <= -c_f |e| + b |y|
        D+|y| <= -c_Ly |y| + m |e| + |D^{-1} C A_red x_r(t)|

    where ``c_f = -mu(A_red)``, ``c_Ly = -(mu(D)/eps + |D^{-1} C B|)``,
    ``b = |B|`` and ``m = |D^{-1} C A_red|``.

    ``coupling="displayed"`` (default) drops the ``m |e|`` feedback and
    bounds the forcing by ``q |A_red x_r(0)| e^{-c_f t}`` with
    ``q = |D^{-1} C|``.  That gives closed forms in the ``phi1``/``phi2``
    kernels, both tending to zero:

        x-bound = e^{-c_f t}|x0 - x_r0| + b (|y0| phi1 + q |A_red x_r0| phi2)
        z-bound = e^{-c_Ly t}|y0| + q |A_red x_r0| phi1 + q x-bound

    Ignoring the feedback is not justified in general, so these can be
    exceeded.  ``coupling="full"`` keeps it and integrates the 2x2
    comparison system exactly, which is a guaranteed bound whenever the
    comparison matrix is Hurwitz (in particular below the LTI threshold).

    Returns ``(x_envelope, z_envelope)``.
    """
    if coupling not in ("displayed", "full"):
        raise ValidationError(f"coupling must be 'displayed' or 'full', got {coupling!r}")
    sc = _lti_prereqs(s, eps)
    x0 = np.asarray(x0, dtype=float).reshape(s.n_x)
    z0 = np.asarray(z0, dtype=float).reshape(s.n_z)
    xr0 = np.asarray(xr0, dtype=float).reshape(s.n_x)
    K = s.DinvC
    Ar = s.A - s.B @ K
    cf = -sc.mu_Ar
    cly = -(sc.mu_D / eps + sc.p)
    gap = vector_norm(x0 - xr0, s.x_norm)
    y0 = vector_norm(z0 + K @ x0, s.z_norm)
    tag = case_of(cf, cly)
    b, q = sc.b, sc.q
    parts = {"c_f": cf, "c_Ly": cly, "b": b, "m": sc.m, "q": q, "coupling": coupling}

    if coupling == "displayed":
        fk = q * vector_norm(Ar @ xr0, s.x_norm)
        parts["forcing"] = fk

        def gx(t):
            t = np.asarray(t, dtype=float)
            return b * (y0 * phi1(t, cf, cly, tag) + fk * phi2(t, cf, cly, tag))

        def gy(t):
            t = np.asarray(t, dtype=float)
            return np.exp(-cly * t) * y0 + fk * phi1(t, cf, cly, tag)

        def ex(t):
            return np.exp(-cf * np.asarray(t, dtype=float)) * gap + gx(t)

        def ez(t):
            return gy(t) + q * ex(t)

        env_x = BoundEnvelope(ex, 0.0, tag, "x-lti", dict(parts), transient=gx)
        env_z = BoundEnvelope(ez, 0.0, tag, "z-lti", dict(parts))
        return env_x, env_z

    # |D^{-1} C A_red x_r(t)| <= min(q |A_red x_r0|, m |x_r0|) e^{-c_f t}
    fk = min(q * vector_norm(Ar @ xr0, s.x_norm), sc.m * vector_norm(xr0, s.x_norm))
    parts["forcing"] = fk
    Gamma = np.array([[-cf, b], [sc.m, -cly]])
    if spectral_abscissa(Gamma) >= 0:
        raise ThresholdError(
            f"comparison matrix is not Hurwitz at eps = {eps:.6g}; lower eps below {_gamma_threshold(sc):.6g}",
            eps=eps,
            threshold=_gamma_threshold(sc),
        )

    def ux(t):
        scalar = np.ndim(t) == 0
        u = _augmented_flow(Gamma, fk, cf, (gap, y0), t)
        return u[0, 0] if scalar else u[:, 0].reshape(np.shape(t))

    def uz(t):
        scalar = np.ndim(t) == 0
        u = _augmented_flow(Gamma, fk, cf, (gap, y0), t)
        out = u[:, 1] + q * u[:, 0]
        return out[0] if scalar else out.reshape(np.shape(t))

    def gx(t):
        return ux(t) - np.exp(-cf * np.asarray(t, dtype=float)) * gap

    env_x = BoundEnvelope(ux, 0.0, tag, "x-lti", dict(parts), transient=gx)
    env_z = BoundEnvelope(uz, 0.0, tag, "z-lti", dict(parts))
    return env_x, env_z


def _gamma_threshold(sc: _Scalars) -> float:
    den = sc.b * sc.m / (-sc.mu_Ar) + sc.p
    return math.inf if den == 0 else -sc.mu_D / den


@dataclass(frozen=True)
class ContractionCertificate:
    """``weights`` are the Perron weights ``N``; ``norm_weights`` are the
    quadratic weights of the composite norm in which ``rate`` is exact
    (``N`` squared)."""

    rate: float
    weights: Optional[CompositeWeight]
    gain_matrix: np.ndarray
    fitted_rate: Optional[float] = None
    validated: Optional[bool] = None

    @property
    def norm_weights(self) -> Optional[CompositeWeight]:
        return None if self.weights is None else self.weights.squared()

    def __iter__(self):
        # lets callers unpack ``rate, weights = contraction_certificate(...)``
        yield self.rate
        yield self.weights


def _composite_distance(traj_diff_x, traj_diff_y, s, W: CompositeWeight):
    return np.array([
        composite_norm(vector_norm(a, s.x_norm), vector_norm(b, s.z_norm), W)
        for a, b in zip(traj_diff_x, traj_diff_y)
    ])


def _fit_decay(times, dist):
    # least-squares slope of log distance; every chord slope of a
    # contracting curve is at most -rate, so the fit is too
    keep = dist > 1e-12 * dist[0]
    if np.count_nonzero(keep) < 3:
        return math.inf
    slope = np.polyfit(times[keep], np.log(dist[keep]), 1)[0]
    return -float(slope)


def contraction_certificate(
    s: LtiBlockSystem,
    eps: float,
    validate: bool = True,
    seed: int = 0,
    n_times: int = 200,
) -> ContractionCertificate:
    """Certified contraction rate of the shifted system and its Perron
    weights ``N``.

    The rate holds in the composite norm ``sqrt(N1^2 |x|^2 + N2^2 |y|^2)``
    (``cert.norm_weights``).

    The rate is ``|alpha(Gamma)|`` for the gain matrix ``Gamma``.  With
    ``validate`` two random shifted trajectories are propagated exactly
    and the fitted decay exponent of their composite distance is compared
    with the certified rate (5% tolerance).
    """
    Gamma = gain_matrix_lti(s, eps)
    sc = _scalars(s)
    if sc.mu_D >= 0 or sc.mu_Ar >= 0:
        raise ValidationError("mu(D) and mu(A_red) must be negative for a certificate")
    alpha = spectral_abscissa(Gamma)
    if alpha >= 0:
        params = GainMatrixParams(a11=-sc.mu_Ar, a12=max(sc.b, 1e-300), a21=max(sc.m, 1e-300), a22=-sc.mu_D, d22=max(sc.p, 1e-300))
        thr = _gain_threshold_terms(params)
        failed = [name for name, val in thr.items() if not eps < val]
        raise ThresholdError(
            f"gain matrix is not Hurwitz at eps = {eps:.6g} (conditions failed: {', '.join(failed) or 'none'})",
            eps=eps,
            threshold=min(thr.values()),
        )
    rate = -alpha
    if Gamma[0, 1] > 0 and Gamma[1, 0] > 0:
        weights = perron_weights(Gamma)
    else:
        # reducible: any positive weights work with a rate given by the diagonal
        weights = CompositeWeight(1.0, 1.0)
    cert = ContractionCertificate(rate=rate, weights=weights, gain_matrix=Gamma)
    if not validate:
        return cert
    M = shifted_lti(s, eps)
    rng = np.random.default_rng(seed)
    d0 = rng.standard_normal(s.n_x + s.n_z) - rng.standard_normal(s.n_x + s.n_z)
    horizon = min(12.0 / rate, 1e6)
    times = np.linspace(0.0, horizon, n_times)
    diffs = np.array([expm(M * t) @ d0 for t in times])
    dist = _composite_distance(diffs[:, : s.n_x], diffs[:, s.n_x :], s, weights.squared())
    fitted = _fit_decay(times, dist)
    ok = fitted >= rate * (1.0 - 0.05)
    return ContractionCertificate(rate, weights, Gamma, fitted, bool(ok))


@dataclass(frozen=True)
class GainMatrixParams:
    """Entries of the template ``[[-a11 + d11 eps, a12], [a21 + d21, -a22/eps + d22]]``."""

    a11: float
    a12: float
    a21: float
    a22: float
    d22: float
    d11: float = 0.0
    d21: float = 0.0

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22", "d22"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be positive and finite, got {v}")
        for name in ("d11", "d21"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be nonnegative and finite, got {v}")

    def matrix(self, eps: float) -> np.ndarray:
        return np.array(
            [[-self.a11 + self.d11 * eps, self.a12], [self.a21 + self.d21, -self.a22 / eps + self.d22]]
        )


def _gain_threshold_terms(p: GainMatrixParams) -> Dict[str, float]:
    return {
        "a11/d11": math.inf if p.d11 == 0 else p.a11 / p.d11,
        "a22/d22": math.inf if p.d22 == 0 else p.a22 / p.d22,
        "determinant": p.a11 * p.a22 / (p.a12 * (p.a21 + p.d21 + p.d22)),
    }


def _sound_gain_threshold(p: GainMatrixParams) -> float:
    # exact sup of eps in (0, inf) up to which the matrix stays Hurwitz:
    # both diagonals negative and det > 0; det * eps is the quadratic
    # d11 d22 eps^2 - (a11 d22 + a22 d11 + a12 (a21 + d21)) eps + a11 a22
    diag = min(math.inf if p.d11 == 0 else p.a11 / p.d11, p.a22 / p.d22)
    qa = p.d11 * p.d22
    qb = -(p.a11 * p.d22 + p.a22 * p.d11 + p.a12 * (p.a21 + p.d21))
    qc = p.a11 * p.a22
    if qa == 0:
        root = -qc / qb
    else:
        # smaller root, in the cancellation-free form
        disc = qb * qb - 4 * qa * qc
        root = (2 * qc) / (-qb + math.sqrt(max(disc, 0.0)))
    return min(diag, root)


@dataclass(frozen=True)
class GainCheck:
    verdict: str
    threshold: float
    terms: Dict[str, float]
    eigenvalues: np.ndarray
    hurwitz: bool
    sound_threshold: float


def hurwitz_gain_check(p: GainMatrixParams, eps: float) -> GainCheck:
    """Min-of-three threshold for the template gain matrix.

    The verdict follows the threshold alone: ``below_threshold_hurwitz``
    when ``eps`` is below it, ``above_threshold_unknown`` otherwise.  The
    actual eigenvalues and the exact Hurwitz threshold ``sound_threshold``
    are attached so the verdict can be audited.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    terms = _gain_threshold_terms(p)
    thr = min(terms.values())
    ev = np.linalg.eigvals(p.matrix(eps))
    verdict = BELOW_THRESHOLD_HURWITZ if eps < thr else ABOVE_THRESHOLD_UNKNOWN
    return GainCheck(verdict, thr, terms, ev, bool(np.max(ev.real) < 0), _sound_gain_threshold(p))


@dataclass
class DiagramReport:
    p11: bool
    p21: bool
    eps_star_1: float
    eps_star_2: float
    eps_grid: List[float]
    hurwitz: List[bool]
    counterexamples: List[Tuple[str, float]] = field(default_factory=list)
    ordering_ok: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return not self.counterexamples and self.ordering_ok is not False


def diagram_check(s: LtiBlockSystem, eps_grid: Sequence[float]) -> DiagramReport:
    """Check the premise-to-conclusion implications on a grid of eps.

    ``p11``: ``mu(A) < 0``, ``mu(D) < 0`` and ``mu(A) mu(D) > |B| |C|``.
    ``p21``: ``D`` and ``A_red`` Hurwitz.  Under ``p11`` the scaled block
    ``[[eps A, eps B], [C, D]]`` must be Hurwitz at every grid point; under
    ``p21`` at every grid point below the LTI threshold.  The thresholds
    ``eps_star_1 = |mu(D)|/|D^-1 C B|`` and ``eps_star_2`` (the LTI
    threshold) should satisfy ``eps_star_2 < eps_star_1`` when both are
    finite.
    """
    grid = [float(e) for e in eps_grid]
    if not grid or min(grid) <= 0:
        raise ValidationError("eps grid must be nonempty and positive")
    mu_A = log_norm(s.A, s.x_norm)
    mu_D = log_norm(s.D, s.z_norm)
    nB = float(induced_norm(s.B, s.z_norm, s.x_norm))
    nC = float(induced_norm(s.C, s.x_norm, s.z_norm))
    p11 = mu_A < 0 and mu_D < 0 and mu_A * mu_D > nB * nC
    try:
        d_ok = spectral_abscissa(s.D) < 0
        p21 = d_ok and spectral_abscissa(reduced_lti(s)) < 0
    except NumericalError:
        p21 = False
    e1 = e2 = math.nan
    if mu_D < 0:
        try:
            e1 = epsilon_star_0_lti(s)
            e2 = epsilon_star_lti(s)
        except (ValidationError, NumericalError):
            pass
    hurwitz = [bool(spectral_abscissa(scaled_block(s, e)) < 0) for e in grid]
    bad: List[Tuple[str, float]] = []
    for e, h in zip(grid, hurwitz):
        if p11 and not h:
            bad.append(("P(1,1)", e))
        if p21 and not math.isnan(e2) and e < e2 and not h:
            bad.append(("P(2,1)", e))
    ordering = None
    if math.isfinite(e1) and math.isfinite(e2):
        ordering = e2 < e1
    return DiagramReport(p11, p21, e1, e2, grid, hurwitz, bad, ordering)
