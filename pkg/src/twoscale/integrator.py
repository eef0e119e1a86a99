"""Adaptive Dormand-Prince 5(4) integration with dense output.

The stepper is explicit.  For two-time-scale systems the step is capped at
``fast_step_cap / fast_rate`` where ``fast_rate`` estimates the size of the
fast Jacobian divided by eps, so that stiffness shows up as a large step
count (or a step-underflow error) instead of a silently wrong answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .errors import NumericalError, ValidationError
from .sysmodel import (
    BoundaryLayer,
    ReducedModel,
    ShiftedSystem,
    Trajectory,
    TwoTimeScaleSystem,
    _vec,
)

__all__ = ["IntegrationConfig", "integrate", "integrate_rhs", "integrate_lti_exact"]

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth-order weights minus the embedded fourth-order ones
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension: y(t + th h) = y + h * K^T (P @ [th, th^2, th^3, th^4])
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass(frozen=True)
class IntegrationConfig:
    """Tolerances, horizon and output grid for one integration.

    ``fast_step_cap`` multiplies ``eps / c_g`` (more precisely the inverse
    of the fast rate) to give the largest step allowed on full and shifted
    systems.  ``fast_rate`` overrides the automatic estimate of that rate.
    """

    t_end: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    fast_step_cap: float = 0.1
    n_grid: int = 1001
    fast_rate: Optional[float] = None
    max_steps: int = 5_000_000

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValidationError(f"t_end must be positive and finite, got {self.t_end}")
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0 < v < 1):
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if not self.max_step > 0:
            raise ValidationError("max_step must be positive")
        if not self.fast_step_cap > 0:
            raise ValidationError("fast_step_cap must be positive")
        if self.n_grid < 2:
            raise ValidationError("n_grid must be at least 2")
        if self.fast_rate is not None and not self.fast_rate > 0:
            raise ValidationError("fast_rate must be positive")

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_grid)


def _err_norm(err, y0, y1, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return math.sqrt(float(np.mean((err / scale) ** 2))) if err.size else 0.0


def _initial_step(rhs, t0, y0, f0, cfg, h_cap):
    # Hairer, Norsett & Wanner, starting step selection
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, h_cap)
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, h_cap)


def integrate_rhs(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    config: IntegrationConfig,
    step_cap: float = math.inf,
    grid=None,
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from 0 to ``config.t_end``.

    Returns a :class:`Trajectory` whose ``x`` block holds the whole state
    sampled on ``grid`` (default: ``config.grid()``) by the 4th-order
    continuous extension.  ``stats`` records accepted and rejected steps,
    right-hand-side evaluations and the largest accepted error estimate
    (in units of the tolerance).
    """
    y = _vec(y0).copy()
    grid = config.grid() if grid is None else np.asarray(grid, dtype=float)
    if grid[0] < 0 or grid[-1] > config.t_end * (1 + 1e-12) or np.any(np.diff(grid) <= 0):
        raise ValidationError("output grid must be increasing inside [0, t_end]")
    t_end = float(grid[-1])
    h_cap = min(config.max_step, step_cap, t_end)
    out = np.empty((grid.size, y.size))
    k = 0
    t = 0.0
    while k < grid.size and grid[k] <= 0.0:
        out[k] = y
        k += 1

    def f(tt, yy):
        v = np.asarray(rhs(tt, yy), dtype=float)
        if v.shape != yy.shape:
            raise ValidationError(f"right-hand side returned shape {v.shape}, expected {yy.shape}")
        return v

    K = np.empty((7, y.size))
    K[0] = f(t, y)
    nfev = 1
    h = _initial_step(f, t, y, K[0], config, h_cap)
    nfev += 1
    accepted = rejected = 0
    max_err = 0.0
    just_rejected = False

    while k < grid.size:
        if accepted + rejected >= config.max_steps:
            raise NumericalError(
                f"step budget of {config.max_steps} exhausted at t = {t:.6g}; "
                "the problem is too stiff for this explicit method, try a smaller t_end or a larger eps"
            )
        h = min(h, h_cap)
        last = t + h >= t_end - 1e-12 * max(1.0, abs(t_end))
        if last:
            h = t_end - t
        if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise NumericalError(
                f"step size underflow at t = {t:.6g}; the problem is too stiff for this explicit method, "
                "try a smaller t_end or a larger eps"
            )
        for i in range(1, 7):
            K[i] = f(t + _C[i] * h, y + h * (np.asarray(_A[i]) @ K[:i]))
        nfev += 6
        y_new = y + h * (_B @ K)
        err = _err_norm(h * (_E @ K), y, y_new, config)
        if not np.all(np.isfinite(y_new)) or not math.isfinite(err):
            if not np.all(np.isfinite(K)):
                raise NumericalError(f"non-finite state encountered at t = {t:.6g}")
            err = math.inf
        if err <= 1.0:
            t_new = t_end if last else t + h
            # dense output for every grid point inside (t, t_new]
            Q = K.T @ _P
            while k < grid.size and (last or grid[k] <= t_new):
                th = (grid[k] - t) / h
                out[k] = y + h * (Q @ np.array([th, th * th, th ** 3, th ** 4]))
                k += 1
            t, y = t_new, y_new
            K[0] = K[6]  # first-same-as-last
            accepted += 1
            max_err = max(max_err, err)
            factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            if just_rejected:
                factor = min(factor, 1.0)
            h *= factor
            just_rejected = False
        else:
            rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2) if math.isfinite(err) else _MIN_FACTOR
            just_rejected = True

    stats = {
        "accepted_steps": accepted,
        "rejected_steps": rejected,
        "rhs_evaluations": nfev,
        "max_error_estimate": max_err,
        "step_cap": float(h_cap),
    }
    return Trajectory(grid.copy(), out, np.zeros((grid.size, 0)), stats=stats)


def _fast_rate(target, initial, config):
    if config.fast_rate is not None:
        return config.fast_rate
    if isinstance(target, TwoTimeScaleSystem):
        n = target.n_x
        return target.fast_rate(0.0, initial[:n], initial[n:])
    n = target.system.n_x
    return target.fast_rate(0.0, initial[:n], initial[n:])


def integrate(target, initial, config: IntegrationConfig, grid=None) -> Trajectory:
    """Integrate a full, reduced, shifted or boundary-layer system.

    ``initial`` is the stacked state: ``(x, z)`` for a full system, ``(x, y)``
    for a shifted one, ``x_r`` for the reduced model and ``y`` for a boundary
    layer (whose time variable is the stretched ``tau``).
    """
    initial = _vec(initial)
    if isinstance(target, (TwoTimeScaleSystem, ShiftedSystem)):
        sysm = target if isinstance(target, TwoTimeScaleSystem) else target.system
        n_x, n_z = sysm.n_x, sysm.n_z
        if initial.size != n_x + n_z:
            raise ValidationError(f"initial state has length {initial.size}, expected {n_x + n_z}")
        rate = _fast_rate(target, initial, config)
        cap = config.fast_step_cap / rate if rate > 0 else math.inf
        traj = integrate_rhs(target.rhs, initial, config, step_cap=cap, grid=grid)
        full = traj.x
        traj.x = full[:, :n_x].copy()
        traj.z = full[:, n_x:].copy()
        traj.stats["fast_rate"] = float(rate)
        return traj
    if isinstance(target, (ReducedModel, BoundaryLayer)):
        if initial.size != target.n:
            raise ValidationError(f"initial state has length {initial.size}, expected {target.n}")
        return integrate_rhs(target.rhs, initial, config, grid=grid)
    if callable(target):
        return integrate_rhs(target, initial, config, grid=grid)
    raise ValidationError(f"cannot integrate object of type {type(target).__name__}")


def integrate_lti_exact(M, x0, grid) -> Trajectory:
    """``x(t_k) = expm(M t_k) x0`` on the given times.

    Each time gets its own scaling-and-squaring exponential, so errors do not
    accumulate along the grid.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"M must be square, got shape {M.shape}")
    x0 = _vec(x0, M.shape[0])
    grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, x0.size))
    with np.errstate(over="raise", invalid="raise"):
        for i, t in enumerate(grid):
            try:
                out[i] = expm(M * t) @ x0
            except (FloatingPointError, OverflowError) as exc:
                raise NumericalError(f"matrix exponential overflow at t = {t:.6g}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalError("matrix exponential produced non-finite values")
    return Trajectory(grid.copy(), out, np.zeros((grid.size, 0)), stats={"method": "expm"})
