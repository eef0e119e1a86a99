"""Closed-form thresholds, constants and error envelopes for two-time-scale
systems, and a checker that compares measured errors against them.

Conventions.  ``k = l_gx l_fz / c_g`` is the coupling gain and
``c_y = c_g/eps - k`` is the decay rate of the fast deviation ``y``; the
slow error decays at ``c_f``.  Two kernels appear everywhere:

    phi1(t) = int_0^t exp(-c_f (t-s)) exp(-c_y s) ds
    phi2(t) = int_0^t exp(-c_f (t-s)) phi1(s) ds

For ``c_f != c_y`` these are ratios of exponential differences (the
"distinct" case); at ``c_f == c_y`` they become ``t e^{-ct}`` and
``t^2 e^{-ct} / 2`` (the "equal" case).  The distinct-case code is written
with ``expm1`` and short series so that it stays accurate right up to the
boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import ThresholdError, ValidationError
from .sysmodel import ConstantsTable

__all__ = [
    "CASE_DISTINCT",
    "CASE_EQUAL",
    "BoundEnvelope",
    "DeltaSet",
    "LemmaYConstants",
    "VerifyReport",
    "case_of",
    "phi1",
    "phi2",
    "epsilon_star_general",
    "delta_set",
    "lemma_y_constants",
    "displayed_leading_terms",
    "envelope_y",
    "envelope_x_general",
    "envelope_z_general",
    "envelope_autonomous",
    "verify_bound",
]

CASE_DISTINCT = "CaseDistinct"
CASE_EQUAL = "CaseEqual"
CASE_RTOL = 1e-9


def case_of(c_f: float, c_y: float, rtol: float = CASE_RTOL) -> str:
    return CASE_EQUAL if abs(c_f - c_y) <= rtol * max(abs(c_f), abs(c_y)) else CASE_DISTINCT


def _h_plus(x):
    # (x - 1 + e^{-x}) / x^2, for x >= 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    big = (xs + np.expm1(-xs)) / (xs * xs)
    ser = 0.5 - x / 6 + x * x / 24 - x ** 3 / 120
    return np.where(small, ser, big)


def _h_minus(x):
    # (1 - e^{-x} (1 + x)) / x^2, for x >= 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    big = (-np.expm1(-xs) - xs * np.exp(-xs)) / (xs * xs)
    ser = 0.5 - x / 3 + x * x / 8 - x ** 3 / 30
    return np.where(small, ser, big)


def _g1(x):
    # (1 - e^{-x}) / x, for x >= 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2, -np.expm1(-xs) / xs)


def phi1(t, a: float, b: float, case: Optional[str] = None):
    """``int_0^t e^{-a(t-s)} e^{-b s} ds``; symmetric in ``a`` and ``b``."""
    t = np.asarray(t, dtype=float)
    case = case_of(a, b) if case is None else case
    if case == CASE_EQUAL:
        c = 0.5 * (a + b)
        return t * np.exp(-c * t)
    # distinct: (e^{-a t} - e^{-b t}) / (b - a), factored on the slower rate
    lo, hi = min(a, b), max(a, b)
    d = hi - lo
    return t * np.exp(-lo * t) * _g1(d * t)


def phi2(t, a: float, b: float, case: Optional[str] = None):
    """``int_0^t e^{-a(t-s)} phi1(s; a, b) ds``.

    Distinct case: ``(t e^{-a t} - phi1) / (b - a)``.
    """
    t = np.asarray(t, dtype=float)
    case = case_of(a, b) if case is None else case
    if case == CASE_EQUAL:
        c = 0.5 * (a + b)
        return 0.5 * t * t * np.exp(-c * t)
    d = b - a
    if d > 0:
        # e^{-a t} (d t - 1 + e^{-d t}) / d^2
        return t * t * np.exp(-a * t) * _h_plus(d * t)
    # b < a: (e^{-b t} - e^{-a t} (1 + |d| t)) / d^2
    return t * t * np.exp(-b * t) * _h_minus(-d * t)


@dataclass(frozen=True)
class BoundEnvelope:
    """A time envelope ``t -> eval(t)`` with its limit value.

    ``parts`` keeps named pieces (for plots and reports); ``case_tag`` says
    which closed form was used.
    """

    eval: Callable
    asymptote: float
    case_tag: str
    label: str = ""
    parts: Dict[str, float] = field(default_factory=dict)
    transient: Optional[Callable] = None

    def __call__(self, t):
        return self.eval(t)


@dataclass(frozen=True)
class DeltaSet:
    dx1: float
    dx2: float
    dx3: float
    dx4: float
    dz1: float
    dz2: float
    dz3: float
    dz4: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("dx1", "dx2", "dx3", "dx4", "dz1", "dz2", "dz3", "dz4")}


@dataclass(frozen=True)
class LemmaYConstants:
    c_y: float
    delta_y: float
    delta: float

    @property
    def limsup(self) -> float:
        return self.delta / self.c_y


def _need_positive(**vals):
    for name, v in vals.items():
        if not v > 0:
            raise ValidationError(f"{name} must be positive, got {v}")


def epsilon_star_general(c: ConstantsTable) -> float:
    """``c_g^2 / (l_gx l_fz)``: the largest eps for which ``c_y > 0``."""
    _need_positive(c_g=c.c_g, l_gx=c.l_gx, l_fz=c.l_fz)
    return c.c_g ** 2 / (c.l_gx * c.l_fz)


def _threshold(c: ConstantsTable) -> float:
    # same as epsilon_star_general but a vanishing coupling means no limit
    prod = c.l_gx * c.l_fz
    return math.inf if prod == 0 else c.c_g ** 2 / prod


def _check_eps(c: ConstantsTable, eps: float):
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    thr = _threshold(c)
    if eps >= thr:
        raise ThresholdError(
            f"eps = {eps:.6g} is not below the admissible bound c_g^2/(l_gx l_fz) = {thr:.6g}",
            eps=eps,
            threshold=thr,
        )


def delta_set(c: ConstantsTable) -> DeltaSet:
    """The eight ``delta`` weights of the leading terms.

    ``dz1`` is evaluated as ``l_gx l_feps (1 + k) / c_g``, which is the
    quotient ``(c_f l_feps / l_fw) dz4`` with ``l_fw`` cancelled; it is
    therefore defined when ``l_fw = 0``.
    """
    _need_positive(c_f=c.c_f, c_g=c.c_g)
    cf, cg = c.c_f, c.c_g
    lfz, lgx, lfe, lft, lgw, lge, lfw = c.l_fz, c.l_gx, c.l_feps, c.l_ft, c.l_gw, c.l_geps, c.l_fw
    k1 = 1.0 + lgx * lfz / cg
    dx1 = lfz * lgx * lfe / cg
    dx2 = lfz * lge + lfz * lgx * lft / (cf * cg) + lfe * cg
    dx3 = lfz * lgw / cg + lfz ** 2 * lgx * lgw / (cf * cg ** 2)
    dx4 = lfz * lgx * lfw / (cf * cg)
    dz4 = (lgx * lfw / (cg * cf)) * k1
    dz1 = lgx * lfe * k1 / cg
    dz2 = k1 * (lge + lgx * lft / (cf * cg)) + lgx * lfe
    dz3 = (lgw / cg + lgx * lgw / (cf * cg ** 2)) * k1
    return DeltaSet(dx1, dx2, dx3, dx4, dz1, dz2, dz3, dz4)


def lemma_y_constants(c: ConstantsTable, eps: float, wbar_x: float = 0.0, wbar_z: float = 0.0) -> LemmaYConstants:
    _check_eps(c, eps)
    if wbar_x < 0 or wbar_z < 0:
        raise ValidationError("disturbance rate bounds must be nonnegative")
    cg, cf = c.c_g, c.c_f
    c_y = cg / eps - (c.l_gx / cg) * c.l_fz
    delta_y = (c.l_gx / (cg * cf)) * (c.l_ft + c.l_fz * (c.l_gw / cg) * wbar_z + c.l_fw * wbar_x)
    delta = c.l_geps + (c.l_gw / cg) * wbar_z + eps * (c.l_gx / cg) * c.l_feps + delta_y
    return LemmaYConstants(c_y=c_y, delta_y=delta_y, delta=delta)


def displayed_leading_terms(c: ConstantsTable, eps: float, wbar_x: float = 0.0, wbar_z: float = 0.0):
    """The eps-proportional leading terms ``(T_x, T_z)`` built from the
    delta weights, before the division by ``c_f`` that the slow-error
    integration produces.  Kept for reporting; envelopes use
    ``T_x / c_f`` instead (see :func:`envelope_x_general`).
    """
    _check_eps(c, eps)
    d = delta_set(c)
    den = c.c_g - eps * (c.l_gx / c.c_g) * c.l_fz
    tx = eps / den * (d.dx2 + d.dx3 * wbar_z + d.dx4 * wbar_x) + eps * eps / den * d.dx1
    tz = eps / den * (d.dz2 + d.dz3 * wbar_z + d.dz4 * wbar_x) + eps * eps / den * d.dz1
    return tx, tz


def _reduced_field_gap(c, L, fred0_norm):
    # coefficient of the decaying source in the fast-deviation inequality
    return (c.l_gx / c.c_g) * fred0_norm - L.delta_y


def envelope_y(
    c: ConstantsTable,
    eps: float,
    y0_norm: float,
    fred0_norm: float,
    wbar_x: float = 0.0,
    wbar_z: float = 0.0,
) -> BoundEnvelope:
    """``e^{-c_y t}|y0| + delta/c_y + E_y(t)`` with

    ``E_y = -e^{-c_y t} delta/c_y + (l_gx/c_g |f_red(0)| - delta_y) phi1(t)``.
    """
    if y0_norm < 0 or fred0_norm < 0:
        raise ValidationError("initial norms must be nonnegative")
    L = lemma_y_constants(c, eps, wbar_x, wbar_z)
    K = _reduced_field_gap(c, L, fred0_norm)
    cy, cf = L.c_y, c.c_f
    tag = case_of(cf, cy)
    lim = L.delta / cy

    def ey(t):
        t = np.asarray(t, dtype=float)
        return -np.exp(-cy * t) * lim + K * phi1(t, cf, cy, tag)

    def ev(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-cy * t) * y0_norm + lim + ey(t)

    parts = {"c_y": cy, "delta": L.delta, "delta_y": L.delta_y, "K": K}
    return BoundEnvelope(ev, lim, tag, "y", parts, transient=ey)


def _x_pieces(c, eps, y0_norm, fred0_norm, wbar_x, wbar_z):
    L = lemma_y_constants(c, eps, wbar_x, wbar_z)
    K = _reduced_field_gap(c, L, fred0_norm)
    cy, cf = L.c_y, c.c_f
    tx, tz = displayed_leading_terms(c, eps, wbar_x, wbar_z)
    # exact forcing limit of the slow error, and the (larger) envelope limit
    sound = (eps * c.l_feps + c.l_fz * L.delta / cy) / cf
    asym_x = tx / cf
    return L, K, cy, cf, sound, asym_x, tx, tz


def envelope_x_general(
    c: ConstantsTable,
    eps: float,
    gap_norm: float,
    y0_norm: float,
    fred0_norm: float,
    wbar_x: float = 0.0,
    wbar_z: float = 0.0,
) -> BoundEnvelope:
    """Envelope for ``|x(t) - x_r(t)|``.

    Integrating the slow-error inequality driven by the fast-deviation
    bound gives

        asymptote + e^{-c_f t} |x0 - x_r0| + E_x(t)

    with ``asymptote = T_x / c_f`` (``T_x`` from
    :func:`displayed_leading_terms`) and

        E_x = -e^{-c_f t} S + l_fz (|y0| - delta/c_y) phi1 + l_fz K phi2,

    where ``S = (eps l_feps + l_fz delta/c_y) / c_f <= asymptote`` is the
    exact forcing limit and ``K = l_gx |f_red(0)| / c_g - delta_y``.
    """
    if min(gap_norm, y0_norm, fred0_norm) < 0:
        raise ValidationError("initial norms must be nonnegative")
    L, K, cy, cf, sound, asym, tx, tz = _x_pieces(c, eps, y0_norm, fred0_norm, wbar_x, wbar_z)
    tag = case_of(cf, cy)
    lim_y = L.delta / cy
    lfz = c.l_fz

    def ex(t):
        t = np.asarray(t, dtype=float)
        return -np.exp(-cf * t) * sound + lfz * (y0_norm - lim_y) * phi1(t, cf, cy, tag) + lfz * K * phi2(t, cf, cy, tag)

    def ev(t):
        t = np.asarray(t, dtype=float)
        return asym + np.exp(-cf * t) * gap_norm + ex(t)

    parts = {"c_y": cy, "c_f": cf, "forcing_limit": sound, "displayed_leading": tx, "K": K}
    return BoundEnvelope(ev, asym, tag, "x", parts, transient=ex)


def envelope_z_general(
    c: ConstantsTable,
    eps: float,
    gap_norm: float,
    y0_norm: float,
    fred0_norm: float,
    wbar_x: float = 0.0,
    wbar_z: float = 0.0,
) -> BoundEnvelope:
    """Envelope for ``|z(t) - z*(x_r(t), w_z(t))|``.

    Triangle split through ``z*(x(t))``: the fast-deviation envelope plus
    ``l_gx / c_g`` times the slow-error envelope.  So the limit is
    ``delta/c_y + (l_gx/c_g) T_x / c_f`` and

        E_z = e^{-c_y t}|y0| + E_y + (l_gx/c_g)(e^{-c_f t}|x0 - x_r0| + E_x).
    """
    ey_env = envelope_y(c, eps, y0_norm, fred0_norm, wbar_x, wbar_z)
    ex_env = envelope_x_general(c, eps, gap_norm, y0_norm, fred0_norm, wbar_x, wbar_z)
    r = c.l_gx / c.c_g
    asym = ey_env.asymptote + r * ex_env.asymptote

    def ev(t):
        return ey_env.eval(t) + r * ex_env.eval(t)

    _, tz = displayed_leading_terms(c, eps, wbar_x, wbar_z)
    parts = dict(ex_env.parts)
    parts["displayed_leading_z"] = tz
    return BoundEnvelope(ev, asym, ex_env.case_tag, "z", parts)


def envelope_autonomous(c: ConstantsTable, eps: float, y0_norm: float, f0_norm: float):
    """``(G_x, G_z)`` for autonomous systems started with ``x_r(0) = x(0)``.

        G_x = l_fz |y0| phi1 + l_fz (l_gx/c_g) |f(x0, z*(x0))| phi2
        G_z = e^{-c_y t} |y0| + (l_gx/c_g) |f(x0, z*(x0))| phi1 + (l_gx/c_g) G_x

    Both tend to zero.
    """
    if y0_norm < 0 or f0_norm < 0:
        raise ValidationError("initial norms must be nonnegative")
    _check_eps(c, eps)
    cg, cf = c.c_g, c.c_f
    r = c.l_gx / cg
    cy = cg / eps - r * c.l_fz
    tag = case_of(cf, cy)
    lfz = c.l_fz

    def gx(t):
        t = np.asarray(t, dtype=float)
        return lfz * y0_norm * phi1(t, cf, cy, tag) + lfz * r * f0_norm * phi2(t, cf, cy, tag)

    def gz(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-cy * t) * y0_norm + r * f0_norm * phi1(t, cf, cy, tag) + r * gx(t)

    parts = {"c_y": cy, "c_f": cf}
    return BoundEnvelope(gx, 0.0, tag, "G_x", parts), BoundEnvelope(gz, 0.0, tag, "G_z", parts)


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    margins: np.ndarray
    ratios: np.ndarray
    worst_index: int
    worst_time: float
    worst_ratio: float
    worst_margin: float
    slack: float

    def as_dict(self):
        return {
            "passed": self.passed,
            "worst_time": self.worst_time,
            "worst_ratio": self.worst_ratio,
            "worst_margin": self.worst_margin,
            "slack": self.slack,
        }


def verify_bound(times, measured, envelope, slack: float = 0.01) -> VerifyReport:
    """Compare ``measured(t)`` with ``envelope(t) (1 + slack)`` on a grid.

    ``envelope`` may be a :class:`BoundEnvelope`, a callable or an array on
    the same grid.  The ratio is ``measured / envelope`` (``0`` where both
    vanish, ``inf`` where only the envelope does).
    """
    times = np.asarray(times, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if measured.shape != times.shape:
        raise ValidationError(f"measured values have shape {measured.shape}, grid has {times.shape}")
    if slack < 0:
        raise ValidationError("slack must be nonnegative")
    env = np.asarray(envelope(times) if callable(envelope) else envelope, dtype=float)
    env = np.broadcast_to(env, times.shape)
    if env.shape != times.shape:
        raise ValidationError("envelope values do not match the grid")
    margins = env * (1.0 + slack) - measured
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(env > 0, measured / env, np.where(measured > 0, np.inf, 0.0))
    i = int(np.argmax(ratios)) if ratios.size else 0
    worst_margin = float(np.min(margins)) if margins.size else 0.0
    return VerifyReport(
        passed=bool(np.all(margins >= 0)),
        margins=margins,
        ratios=ratios,
        worst_index=i,
        worst_time=float(times[i]) if times.size else 0.0,
        worst_ratio=float(ratios[i]) if ratios.size else 0.0,
        worst_margin=worst_margin,
        slack=slack,
    )
