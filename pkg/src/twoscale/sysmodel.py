"""Two-time-scale systems and the objects derived from them.

A system is a pair of vector fields

    dx/dt     = f(t, x, z, w_x, eps)
    eps dz/dt = g(x, z, w_z, eps)

with smooth disturbance signals ``w_x`` and ``w_z``.  From it we build the
quasi-steady-state map ``z*(x, w_z)`` (the root of ``g`` at ``eps = 0``),
the reduced slow model, the frozen-slow boundary layer, and the system
rewritten in the deviation ``y = z - z*(x, w_z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .errors import NumericalError, ValidationError
from .specnorm import L2, NormKind, vector_norm

Vector = np.ndarray


# ---------------------------------------------------------------------------
# disturbances


@dataclass(frozen=True)
class DisturbanceSignal:
    """A smooth disturbance ``t -> w(t)`` with a known bound on ``|dw/dt|``.

    Build these with :func:`constant`, :func:`sinusoid`, :func:`ramp`,
    :func:`smooth_step` and :func:`superpose` rather than by hand; the
    factories keep ``derivative_bound`` exact (or, for sums, a triangle
    inequality upper bound).
    """

    value: Callable[[float], Vector]
    derivative_bound: float
    dimension: int
    derivative: Callable[[float], Vector]
    description: str = "custom"
    norm: NormKind = L2

    def __post_init__(self):
        if self.dimension < 1:
            raise ValidationError("disturbance dimension must be positive")
        if not (self.derivative_bound >= 0 and math.isfinite(self.derivative_bound)):
            raise ValidationError("derivative_bound must be finite and nonnegative")

    def __call__(self, t: float) -> Vector:
        return self.value(t)


def _vec(v, n=None) -> Vector:
    a = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if n is not None and a.size != n:
        raise ValidationError(f"expected a vector of length {n}, got {a.size}")
    return a


def constant(level) -> DisturbanceSignal:
    level = _vec(level)
    level.setflags(write=False)
    zero = np.zeros_like(level)
    zero.setflags(write=False)
    return DisturbanceSignal(
        value=lambda t: level.copy(),
        derivative=lambda t: zero.copy(),
        derivative_bound=0.0,
        dimension=level.size,
        description=f"constant({level.tolist()})",
    )


def zero_signal(n: int) -> DisturbanceSignal:
    return constant(np.zeros(n))


def sinusoid(amplitude, omega: float, phase: float = 0.0, offset=None, norm: NormKind = L2) -> DisturbanceSignal:
    """``offset + amplitude * sin(omega t + phase)`` with one shared phase.

    The shared phase makes ``|dw/dt| = |omega| |amplitude| |cos(.)|``, so the
    bound ``|omega| |amplitude|`` is attained.
    """
    amp = _vec(amplitude)
    off = np.zeros_like(amp) if offset is None else _vec(offset, amp.size)
    omega = float(omega)
    return DisturbanceSignal(
        value=lambda t: off + amp * math.sin(omega * t + phase),
        derivative=lambda t: amp * (omega * math.cos(omega * t + phase)),
        derivative_bound=abs(omega) * vector_norm(amp, norm),
        dimension=amp.size,
        description=f"sinusoid(amp={amp.tolist()}, omega={omega}, phase={phase})",
        norm=norm,
    )


def ramp(slope, offset=None, norm: NormKind = L2) -> DisturbanceSignal:
    s = _vec(slope)
    off = np.zeros_like(s) if offset is None else _vec(offset, s.size)
    return DisturbanceSignal(
        value=lambda t: off + s * t,
        derivative=lambda t: s.copy(),
        derivative_bound=vector_norm(s, norm),
        dimension=s.size,
        description=f"ramp(slope={s.tolist()})",
        norm=norm,
    )


def smooth_step(height, t0: float, width: float, offset=None, norm: NormKind = L2) -> DisturbanceSignal:
    """``offset + height * (1 + tanh((t - t0)/width)) / 2``.

    The derivative peaks at ``t0`` with norm ``|height| / (2 width)``.
    """
    if width <= 0:
        raise ValidationError("smooth_step width must be positive")
    h = _vec(height)
    off = np.zeros_like(h) if offset is None else _vec(offset, h.size)

    def value(t):
        return off + h * (0.5 * (1.0 + math.tanh((t - t0) / width)))

    def derivative(t):
        s = 1.0 / math.cosh((t - t0) / width) if abs((t - t0) / width) < 350 else 0.0
        return h * (0.5 * s * s / width)

    return DisturbanceSignal(
        value=value,
        derivative=derivative,
        derivative_bound=vector_norm(h, norm) / (2.0 * width),
        dimension=h.size,
        description=f"smooth_step(height={h.tolist()}, t0={t0}, width={width})",
        norm=norm,
    )


def superpose(*signals: DisturbanceSignal) -> DisturbanceSignal:
    """Sum of signals.  The derivative bound is the sum of the parts' bounds."""
    if not signals:
        raise ValidationError("superpose needs at least one signal")
    n = signals[0].dimension
    if any(s.dimension != n for s in signals):
        raise ValidationError("superposed signals must share a dimension")
    parts = tuple(signals)
    return DisturbanceSignal(
        value=lambda t: sum((s.value(t) for s in parts[1:]), parts[0].value(t)),
        derivative=lambda t: sum((s.derivative(t) for s in parts[1:]), parts[0].derivative(t)),
        derivative_bound=float(sum(s.derivative_bound for s in parts)),
        dimension=n,
        description=" + ".join(s.description for s in parts),
        norm=parts[0].norm,
    )


# ---------------------------------------------------------------------------
# the system itself


@dataclass(frozen=True)
class TwoTimeScaleSystem:
    """Slow field ``f(t, x, z, w_x, eps)`` and fast field ``g(x, z, w_z, eps)``.

    Optional extras speed things up without changing any result:

    ``zstar``
        closed-form root ``(x, w_z, eps) -> z`` of ``g``; it is still checked
        against the residual tolerance and polished by Newton if needed.
    ``dg_dz``
        Jacobian of ``g`` in ``z``, ``(x, z, w_z, eps) -> (n_z, n_z)``.
    ``zstar_jacobians``
        ``(x, w_z) -> (dz*/dx, dz*/dw_z)``; without it the shifted system
        differentiates ``z*`` numerically.
    """

    f: Callable
    g: Callable
    n_x: int
    n_z: int
    w_x_sig: DisturbanceSignal
    w_z_sig: DisturbanceSignal
    epsilon: float
    x_norm: NormKind = L2
    z_norm: NormKind = L2
    zstar: Optional[Callable] = None
    dg_dz: Optional[Callable] = None
    zstar_jacobians: Optional[Callable] = None
    name: str = "system"

    def __post_init__(self):
        if self.n_x < 1 or self.n_z < 1:
            raise ValidationError("state dimensions must be positive")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValidationError(f"epsilon must be positive and finite, got {self.epsilon}")

    def with_epsilon(self, eps: float) -> "TwoTimeScaleSystem":
        return replace(self, epsilon=float(eps))

    def w_x(self, t):
        return self.w_x_sig.value(t)

    def w_z(self, t):
        return self.w_z_sig.value(t)

    def slow(self, t, x, z, eps=None):
        eps = self.epsilon if eps is None else eps
        out = np.asarray(self.f(t, x, z, self.w_x(t), eps), dtype=float)
        if out.shape != (self.n_x,):
            raise ValidationError(f"f returned shape {out.shape}, expected ({self.n_x},)")
        return out

    def fast(self, t, x, z, eps=None):
        eps = self.epsilon if eps is None else eps
        out = np.asarray(self.g(x, z, self.w_z(t), eps), dtype=float)
        if out.shape != (self.n_z,):
            raise ValidationError(f"g returned shape {out.shape}, expected ({self.n_z},)")
        return out

    def rhs(self, t, s):
        """Right-hand side of the stacked state ``(x, z)``."""
        x, z = s[: self.n_x], s[self.n_x:]
        return np.concatenate([self.slow(t, x, z), self.fast(t, x, z) / self.epsilon])

    def fast_rate(self, t, x, z) -> float:
        """Size of the fast Jacobian over eps, used to cap explicit steps."""
        J = _jacobian_z(self, x, z, self.w_z(t), self.epsilon)
        return float(np.linalg.norm(J, 2)) / self.epsilon


# ---------------------------------------------------------------------------
# quasi-steady state


def _jacobian_z(system, x, z, w_z, eps):
    if system.dg_dz is not None:
        return np.atleast_2d(np.asarray(system.dg_dz(x, z, w_z, eps), dtype=float))
    n = system.n_z
    J = np.empty((n, n))
    h = 1e-7 * (1.0 + np.abs(z))
    for j in range(n):
        zp = z.copy()
        zm = z.copy()
        zp[j] += h[j]
        zm[j] -= h[j]
        J[:, j] = (np.asarray(system.g(x, zp, w_z, eps)) - np.asarray(system.g(x, zm, w_z, eps))) / (2 * h[j])
    return J


def _residual(system, x, z, w_z, eps):
    r = np.asarray(system.g(x, z, w_z, eps), dtype=float)
    if not np.all(np.isfinite(r)):
        raise NumericalError("fast field returned non-finite values")
    return r


def quasi_steady_state(
    system: TwoTimeScaleSystem,
    x,
    w_z,
    eps: float = 0.0,
    tol: float = 1e-12,
    z0=None,
    max_newton: int = 60,
    max_flow_steps: int = 200_000,
) -> Vector:
    """Root ``z*`` of ``g(x, ., w_z, eps)``.

    Damped Newton first; if it stalls, follow the flow ``dz/ds = g`` (which
    converges when ``g`` is contracting in ``z``) with a step that is halved
    whenever the residual grows.  The residual is measured in the system's
    fast-state norm.
    """
    x = _vec(x, system.n_x)
    w_z = _vec(w_z)
    znorm = system.z_norm
    if system.zstar is not None and z0 is None:
        z = _vec(system.zstar(x, w_z, eps), system.n_z)
    else:
        z = np.zeros(system.n_z) if z0 is None else _vec(z0, system.n_z).copy()

    r = _residual(system, x, z, w_z, eps)
    rn = vector_norm(r, znorm)
    # scale-aware target; tol is absolute but we never ask for less than
    # a few ulps of the current magnitude
    target = max(tol, 64 * np.finfo(float).eps * (1.0 + vector_norm(z, znorm)))
    if rn <= target:
        return z

    for _ in range(max_newton):
        J = _jacobian_z(system, x, z, w_z, eps)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        lam = 1.0
        while lam > 1e-6:
            zt = z + lam * step
            rt = _residual(system, x, zt, w_z, eps)
            rtn = vector_norm(rt, znorm)
            if rtn < rn or rtn <= target:
                break
            lam *= 0.5
        else:
            break
        z, r, rn = zt, rt, rtn
        target = max(tol, 64 * np.finfo(float).eps * (1.0 + vector_norm(z, znorm)))
        if rn <= target or vector_norm(lam * step, znorm) <= 1e-15 * (1.0 + vector_norm(z, znorm)):
            if rn <= max(target, 1e3 * tol):
                return z
            break

    # contractive flow fallback, explicit midpoint with residual monitoring
    J = _jacobian_z(system, x, z, w_z, eps)
    h = 1.0 / max(np.linalg.norm(J, 2), 1e-12)
    for _ in range(max_flow_steps):
        k1 = r
        zm = z + 0.5 * h * k1
        k2 = _residual(system, x, zm, w_z, eps)
        zt = z + h * k2
        rt = _residual(system, x, zt, w_z, eps)
        rtn = vector_norm(rt, znorm)
        if rtn < rn:
            z, r, rn = zt, rt, rtn
            h *= 1.2
        else:
            h *= 0.5
            if h < 1e-300:
                break
        if rn <= target:
            return z
    raise NumericalError(
        f"quasi-steady state did not converge: residual |g| = {rn:.3e} > tol = {tol:.1e} at x = {x.tolist()}"
    )


def zstar_jacobians(system: TwoTimeScaleSystem, x, w_z) -> Tuple[np.ndarray, np.ndarray]:
    """``(dz*/dx, dz*/dw_z)`` at ``eps = 0``.

    Uses the system's closed form when it has one, otherwise central
    differences of :func:`quasi_steady_state` with step ``1e-6 (1 + |.|)``.
    """
    x = _vec(x, system.n_x)
    w_z = _vec(w_z)
    if system.zstar_jacobians is not None:
        Jx, Jw = system.zstar_jacobians(x, w_z)
        return np.atleast_2d(np.asarray(Jx, dtype=float)), np.atleast_2d(np.asarray(Jw, dtype=float))
    base = quasi_steady_state(system, x, w_z, 0.0)

    def solve(xx, ww):
        return quasi_steady_state(system, xx, ww, 0.0, z0=base if system.zstar is None else None)

    Jx = np.empty((system.n_z, system.n_x))
    hx = 1e-6 * (1.0 + vector_norm(x, system.x_norm))
    for j in range(system.n_x):
        e = np.zeros(system.n_x)
        e[j] = hx
        Jx[:, j] = (solve(x + e, w_z) - solve(x - e, w_z)) / (2 * hx)
    Jw = np.empty((system.n_z, w_z.size))
    hw = 1e-6 * (1.0 + float(np.linalg.norm(w_z)))
    for j in range(w_z.size):
        e = np.zeros(w_z.size)
        e[j] = hw
        Jw[:, j] = (solve(x, w_z + e) - solve(x, w_z - e)) / (2 * hw)
    if not (np.all(np.isfinite(Jx)) and np.all(np.isfinite(Jw))):
        raise NumericalError("finite-difference derivative of z* is not finite")
    return Jx, Jw


# ---------------------------------------------------------------------------
# derived systems


@dataclass(frozen=True)
class ReducedModel:
    """``x_r' = f(t, x_r, z*(x_r, w_z), w_x, 0)``."""

    system: TwoTimeScaleSystem

    def __call__(self, t, x_r, w_x, w_z):
        s = self.system
        z = quasi_steady_state(s, x_r, w_z, 0.0)
        return np.asarray(s.f(t, _vec(x_r, s.n_x), z, _vec(w_x), 0.0), dtype=float)

    @property
    def n(self):
        return self.system.n_x

    def rhs(self, t, x_r):
        s = self.system
        return self(t, x_r, s.w_x(t), s.w_z(t))


@dataclass(frozen=True)
class BoundaryLayer:
    """``dy/dtau = g(x, y + z*(x, w_z), w_z, 0)`` with ``x`` and ``w_z`` frozen."""

    system: TwoTimeScaleSystem
    x: Vector
    w_z: Vector
    zstar: Vector

    def __call__(self, tau, y):
        s = self.system
        return np.asarray(s.g(self.x, _vec(y, s.n_z) + self.zstar, self.w_z, 0.0), dtype=float)

    @property
    def n(self):
        return self.system.n_z

    rhs = __call__


@dataclass(frozen=True)
class ShiftedSystem:
    """The system in ``(x, y)`` with ``y = z - z*(x, w_z)``.

    Differentiating ``y`` along solutions gives

        eps y' = g(x, y + z*, w_z, eps) - eps (dz*/dw_z w_z' + dz*/dx x')

    with ``x' = f(t, x, y + z*, w_x, eps)``.
    """

    system: TwoTimeScaleSystem

    @property
    def n(self):
        return self.system.n_x + self.system.n_z

    @property
    def epsilon(self):
        return self.system.epsilon

    def zstar(self, t, x):
        s = self.system
        return quasi_steady_state(s, x, s.w_z(t), 0.0)

    def slow(self, t, x, y):
        s = self.system
        return s.slow(t, x, y + self.zstar(t, x))

    def fast_scaled(self, t, x, y):
        """``eps y'``."""
        s = self.system
        w_z = s.w_z(t)
        zs = quasi_steady_state(s, x, w_z, 0.0)
        z = y + zs
        xdot = s.slow(t, x, z)
        Jx, Jw = zstar_jacobians(s, x, w_z)
        drift = Jx @ xdot + Jw @ s.w_z_sig.derivative(t)
        return s.fast(t, x, z) - s.epsilon * drift

    def rhs(self, t, st):
        s = self.system
        x, y = st[: s.n_x], st[s.n_x:]
        w_z = s.w_z(t)
        zs = quasi_steady_state(s, x, w_z, 0.0)
        z = y + zs
        xdot = s.slow(t, x, z)
        Jx, Jw = zstar_jacobians(s, x, w_z)
        ydot = s.fast(t, x, z) / s.epsilon - (Jx @ xdot + Jw @ s.w_z_sig.derivative(t))
        if not (np.all(np.isfinite(xdot)) and np.all(np.isfinite(ydot))):
            raise NumericalError("shifted system produced non-finite values")
        return np.concatenate([xdot, ydot])

    def initial_state(self, x0, z0):
        s = self.system
        x0 = _vec(x0, s.n_x)
        return np.concatenate([x0, _vec(z0, s.n_z) - quasi_steady_state(s, x0, s.w_z(0.0), 0.0)])

    def fast_rate(self, t, x, y):
        return self.system.fast_rate(t, x, y + self.zstar(t, x))


def reduced_model(system: TwoTimeScaleSystem) -> ReducedModel:
    return ReducedModel(system)


def boundary_layer(system: TwoTimeScaleSystem, x, w_z=None) -> BoundaryLayer:
    x = _vec(x, system.n_x)
    w_z = system.w_z(0.0) if w_z is None else _vec(w_z)
    zs = quasi_steady_state(system, x, w_z, 0.0)
    return BoundaryLayer(system, x, w_z, zs)


def shifted_system(system: TwoTimeScaleSystem) -> ShiftedSystem:
    return ShiftedSystem(system)


# ---------------------------------------------------------------------------
# constants


_CONST_FIELDS = (
    "c_f",
    "c_g",
    "l_fx",
    "l_fz",
    "l_ft",
    "l_fw",
    "l_feps",
    "l_gx",
    "l_gw",
    "l_geps",
    "l_zstar_w",
    "l_f_wz",
)


@dataclass(frozen=True)
class ConstantsTable:
    """Contraction rates and Lipschitz constants of a two-time-scale system.

    ``c_f``: contraction rate of the reduced model in ``x``.
    ``c_g``: contraction rate of ``g`` in ``z``.
    ``l_ab``: Lipschitz constant of field ``a`` in argument ``b`` (``fw`` is
    the ``w_x`` dependence of ``f``, ``f_wz`` the ``w_z`` dependence of the
    reduced field, ``zstar_w`` the ``x``-Lipschitz constant of ``dz*/dw_z``).

    ``provenance`` maps each field to ``"supplied"`` or ``"estimated"``.
    """

    c_f: float
    c_g: float
    l_fx: float = 0.0
    l_fz: float = 0.0
    l_ft: float = 0.0
    l_fw: float = 0.0
    l_feps: float = 0.0
    l_gx: float = 0.0
    l_gw: float = 0.0
    l_geps: float = 0.0
    l_zstar_w: float = 0.0
    l_f_wz: float = 0.0
    provenance: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in _CONST_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
                raise ValidationError(f"constant {name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.c_f <= 0 or self.c_g <= 0:
            raise ValidationError(f"contraction rates must be positive (c_f={self.c_f}, c_g={self.c_g})")
        for name in _CONST_FIELDS[2:]:
            if getattr(self, name) < 0:
                raise ValidationError(f"Lipschitz constant {name} must be nonnegative")
        prov = {name: "supplied" for name in _CONST_FIELDS}
        for k, v in dict(self.provenance).items():
            if k not in prov:
                raise ValidationError(f"unknown constant {k!r} in provenance")
            if v not in ("supplied", "estimated"):
                raise ValidationError(f"provenance must be 'supplied' or 'estimated', got {v!r}")
            prov[k] = v
        object.__setattr__(self, "provenance", prov)

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return _CONST_FIELDS

    def replace(self, **changes) -> "ConstantsTable":
        return replace(self, **changes)

    def as_dict(self) -> Dict[str, dict]:
        return {k: {"value": getattr(self, k), "provenance": self.provenance[k]} for k in _CONST_FIELDS}

    @classmethod
    def all_ones(cls) -> "ConstantsTable":
        return cls(**{k: 1.0 for k in _CONST_FIELDS})


@dataclass(frozen=True)
class SamplingBox:
    """Where :func:`estimate_constants` draws its sample pairs.

    Each range is ``(low, high)``, scalar or per-component.
    """

    x: Tuple = (-1.0, 1.0)
    z: Tuple = (-1.0, 1.0)
    w_x: Tuple = (-1.0, 1.0)
    w_z: Tuple = (-1.0, 1.0)
    t: Tuple[float, float] = (0.0, 10.0)
    eps: Tuple[float, float] = (0.0, 0.1)
    count: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("sampling count must be positive")


def _draw(rng, rng_range, n, size):
    lo = np.broadcast_to(np.asarray(rng_range[0], dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(rng_range[1], dtype=float), (n,))
    if np.any(hi < lo) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValidationError("sampling box ranges must be finite with low <= high")
    return lo + (hi - lo) * rng.random((size, n))


def _pairs(rng, rng_range, n, count):
    # half far-apart pairs, half close pairs (local slopes matter too)
    a = _draw(rng, rng_range, n, count)
    b = _draw(rng, rng_range, n, count)
    lo = np.broadcast_to(np.asarray(rng_range[0], dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(rng_range[1], dtype=float), (n,))
    width = np.maximum(hi - lo, 1e-12)
    half = count // 2
    b[:half] = a[:half] + 1e-3 * width * (rng.random((half, n)) - 0.5)
    return a, b


def estimate_constants(system: TwoTimeScaleSystem, box: SamplingBox = SamplingBox()) -> ConstantsTable:
    """Sampled constants for a black-box system.

    Lipschitz constants are maximised difference quotients over random pairs
    and therefore lower bounds.  Contraction rates come from the largest
    sampled one-sided quotient ``<F(a) - F(b), a - b> / |a - b|^2`` in the
    2-norm, so they are upper bounds on the true rates.  Neither is a
    certificate.
    """
    rng = np.random.default_rng(box.seed)
    n_x, n_z = system.n_x, system.n_z
    n_wx, n_wz = system.w_x_sig.dimension, system.w_z_sig.dimension
    N = box.count
    xn, zn = system.x_norm, system.z_norm

    X = _draw(rng, box.x, n_x, N)
    Z = _draw(rng, box.z, n_z, N)
    WX = _draw(rng, box.w_x, n_wx, N)
    WZ = _draw(rng, box.w_z, n_wz, N)
    T = _draw(rng, box.t, 1, N)[:, 0]
    E = _draw(rng, box.eps, 1, N)[:, 0]

    def f(i, x=None, z=None, wx=None, t=None, e=None):
        return np.asarray(
            system.f(
                T[i] if t is None else t,
                X[i] if x is None else x,
                Z[i] if z is None else z,
                WX[i] if wx is None else wx,
                E[i] if e is None else e,
            ),
            dtype=float,
        )

    def g(i, x=None, z=None, wz=None, e=None):
        return np.asarray(
            system.g(X[i] if x is None else x, Z[i] if z is None else z, WZ[i] if wz is None else wz, E[i] if e is None else e),
            dtype=float,
        )

    def lip(vary, rng_range, dim, fn, out_norm, in_norm):
        a, b = _pairs(rng, rng_range, dim, N)
        best = 0.0
        for i in range(N):
            d = vector_norm(a[i] - b[i], in_norm)
            if d <= 0:
                continue
            q = vector_norm(fn(i, **{vary: a[i]}) - fn(i, **{vary: b[i]}), out_norm) / d
            if not math.isfinite(q):
                raise NumericalError(f"non-finite difference quotient while estimating Lip in {vary}")
            best = max(best, q)
        return best

    def oslip(rng_range, dim, fn):
        a, b = _pairs(rng, rng_range, dim, N)
        best = -math.inf
        for i in range(N):
            d = a[i] - b[i]
            dd = float(d @ d)
            if dd <= 0:
                continue
            best = max(best, float((fn(i, a[i]) - fn(i, b[i])) @ d) / dd)
        if not math.isfinite(best):
            raise NumericalError("one-sided Lipschitz estimate is not finite")
        return best

    def eps_lip(fn, out_norm):
        # Lip in eps: pairs of eps values inside the box
        lo, hi = box.eps
        best = 0.0
        for i in range(N):
            e1, e2 = lo + (hi - lo) * rng.random(2)
            if e1 == e2:
                continue
            best = max(best, vector_norm(fn(i, e=e1) - fn(i, e=e2), out_norm) / abs(e1 - e2))
        return best

    l2 = L2
    vals = {}
    vals["c_g"] = -oslip(box.z, n_z, lambda i, z: g(i, z=z, e=0.0))
    vals["l_gx"] = lip("x", box.x, n_x, g, zn, xn)
    vals["l_gw"] = lip("wz", box.w_z, n_wz, g, zn, l2)
    vals["l_geps"] = eps_lip(g, zn) if box.eps[1] > box.eps[0] else 0.0
    vals["l_fx"] = lip("x", box.x, n_x, f, xn, xn)
    vals["l_fz"] = lip("z", box.z, n_z, f, xn, zn)
    vals["l_fw"] = lip("wx", box.w_x, n_wx, f, xn, l2)
    vals["l_feps"] = eps_lip(f, xn) if box.eps[1] > box.eps[0] else 0.0
    t_lo, t_hi = box.t
    if t_hi > t_lo:
        vals["l_ft"] = lip("t", box.t, 1, lambda i, t=None: f(i, t=None if t is None else float(t[0])), xn, l2)
    else:
        vals["l_ft"] = 0.0

    # reduced-field constants need z*; use a smaller sample
    M = max(20, N // 10)
    red = ReducedModel(system)

    def fred(i, x=None, wz=None):
        return red(T[i], X[i] if x is None else x, WX[i], WZ[i] if wz is None else wz)

    a, b = _pairs(rng, box.x, n_x, M)
    best = -math.inf
    for i in range(M):
        d = a[i] - b[i]
        dd = float(d @ d)
        if dd > 0:
            best = max(best, float((fred(i, x=a[i]) - fred(i, x=b[i])) @ d) / dd)
    vals["c_f"] = -best
    a, b = _pairs(rng, box.w_z, n_wz, M)
    best = 0.0
    for i in range(M):
        d = vector_norm(a[i] - b[i], l2)
        if d > 0:
            best = max(best, vector_norm(fred(i, wz=a[i]) - fred(i, wz=b[i]), xn) / d)
    vals["l_f_wz"] = best
    # x-Lipschitz constant of dz*/dw_z, in the induced 2-norm
    best = 0.0
    Mz = max(10, M // 4)
    a, b = _pairs(rng, box.x, n_x, Mz)
    for i in range(Mz):
        d = vector_norm(a[i] - b[i], xn)
        if d > 0:
            Ja = zstar_jacobians(system, a[i], WZ[i])[1]
            Jb = zstar_jacobians(system, b[i], WZ[i])[1]
            best = max(best, float(np.linalg.norm(Ja - Jb, 2)) / d)
    vals["l_zstar_w"] = best

    if vals["c_g"] <= 0:
        raise ValidationError(f"sampled fast dynamics are not contracting in z (estimated rate {vals['c_g']:.3g})")
    if vals["c_f"] <= 0:
        raise ValidationError(f"sampled reduced model is not contracting in x (estimated rate {vals['c_f']:.3g})")
    return ConstantsTable(**vals, provenance={k: "estimated" for k in _CONST_FIELDS})


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """States on an increasing time grid.

    ``x`` and ``z`` are ``(len(times), n)`` arrays; for one-block systems
    (reduced model, boundary layer) ``z`` has zero columns.  ``derived``
    holds optional companions such as ``x_r``, ``z_star`` and ``y``.
    """

    times: np.ndarray
    x: np.ndarray
    z: np.ndarray
    derived: Dict[str, np.ndarray] = field(default_factory=dict)
    stats: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.z = np.asarray(self.z, dtype=float).reshape(len(self.times), -1)
        if self.x.shape[0] != self.times.size:
            self.x = self.x.reshape(self.times.size, -1)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def states(self):
        return [{"x": self.x[i], "z": self.z[i]} for i in range(len(self))]
