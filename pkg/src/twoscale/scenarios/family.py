"""Nonlinear two-time-scale systems with constants known in closed form.

Every member is a linear block system plus bounded, globally Lipschitz
nonlinearities:

    f = A x + B z + beta_f sin(x) + E_x w_x + a_t sin(omega_t t) 1 + eps e_f
    g = C x + D z + beta_g P tanh(x) + E_z w_z + eps e_g

so ``z* = -D^{-1}(C x + beta_g P tanh(x) + E_z w_z)`` at eps = 0 and the
reduced field is ``M x + beta_f sin(x) - beta_g B D^{-1} P tanh(x) + ...``
with ``M = A - B D^{-1} C``.  Drawing ``M`` and ``D`` with negative
log-norms first and then setting ``A = M + B D^{-1} C`` fixes both
contraction rates by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..bounds import epsilon_star_general
from ..errors import ValidationError
from ..specnorm import log_norm
from ..sysmodel import (
    ConstantsTable,
    TwoTimeScaleSystem,
    sinusoid,
    smooth_step,
    zero_signal,
)

__all__ = ["FamilyInstance", "perturbed_linear", "scalar_nonlinear"]


@dataclass(frozen=True)
class FamilyInstance:
    system: TwoTimeScaleSystem
    constants: ConstantsTable
    x0: np.ndarray
    z0: np.ndarray
    horizon: float
    seed: int
    params: dict

    @property
    def wbar_x(self) -> float:
        return self.system.w_x_sig.derivative_bound

    @property
    def wbar_z(self) -> float:
        return self.system.w_z_sig.derivative_bound

    @property
    def epsilon_star(self) -> float:
        return epsilon_star_general(self.constants)


def _norm2(M) -> float:
    M = np.atleast_2d(M)
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def _draw_contracting(rng, n, base, spread, margin):
    while True:
        M = -(base + rng.uniform()) * np.eye(n) + spread * rng.standard_normal((n, n))
        if log_norm(M) <= -margin:
            return M


def _build(params, eps):
    A, B, C, D = params["A"], params["B"], params["C"], params["D"]
    P, Ex, Ez = params["P"], params["E_x"], params["E_z"]
    bf, bg = params["beta_f"], params["beta_g"]
    at, wt = params["a_t"], params["omega_t"]
    ef, eg = params["e_f"], params["e_g"]
    wx_sig, wz_sig = params["w_x"], params["w_z"]
    nx, nz = A.shape[0], D.shape[0]
    Dinv = np.linalg.inv(D)
    M = A - B @ Dinv @ C

    def f(t, x, z, w_x, e):
        return A @ x + B @ z + bf * np.sin(x) + Ex @ w_x + at * math.sin(wt * t) + e * ef

    def g(x, z, w_z, e):
        return C @ x + D @ z + bg * (P @ np.tanh(x)) + Ez @ w_z + e * eg

    def zstar(x, w_z, e):
        return -Dinv @ (C @ x + bg * (P @ np.tanh(x)) + Ez @ w_z + e * eg)

    def jac(x, w_z):
        sech2 = 1.0 / np.cosh(x) ** 2
        return -Dinv @ (C + bg * P * sech2[None, :]), -Dinv @ Ez

    system = TwoTimeScaleSystem(
        f=f,
        g=g,
        n_x=nx,
        n_z=nz,
        w_x_sig=wx_sig,
        w_z_sig=wz_sig,
        epsilon=1.0 if eps is None else eps,
        zstar=zstar,
        dg_dz=lambda x, z, w, e: D,
        zstar_jacobians=jac,
        name=params.get("name", "perturbed-linear"),
    )
    c_f = -(log_norm(M) + abs(bf) + abs(bg) * _norm2(B @ Dinv @ P))
    if c_f <= 0:
        raise ValidationError("drawn instance has no certified reduced contraction")
    constants = ConstantsTable(
        c_f=c_f,
        c_g=-log_norm(D),
        l_fx=_norm2(A) + abs(bf),
        l_fz=_norm2(B),
        l_ft=abs(at) * abs(wt) * math.sqrt(nx),
        l_fw=_norm2(Ex),
        l_feps=float(np.linalg.norm(ef)),
        l_gx=_norm2(C) + abs(bg) * _norm2(P),
        l_gw=_norm2(Ez),
        l_geps=float(np.linalg.norm(eg)),
        l_zstar_w=0.0,
        l_f_wz=_norm2(B @ Dinv @ Ez),
    )
    return system, constants


def perturbed_linear(
    seed: int,
    n_x: Optional[int] = None,
    n_z: Optional[int] = None,
    autonomous: bool = False,
    eps_fraction: float = 0.5,
) -> FamilyInstance:
    """Draw one family member from ``seed``.

    Dimensions default to random values in 1..3.  With ``autonomous`` all
    disturbances, the explicit time dependence and the eps terms are
    zero.  The returned system runs at ``eps_fraction`` times its
    admissible eps, and ``horizon`` covers about 15 slow and fast decay
    times.
    """
    if not 0 < eps_fraction < 1:
        raise ValidationError("eps_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    nx = int(rng.integers(1, 4)) if n_x is None else int(n_x)
    nz = int(rng.integers(1, 4)) if n_z is None else int(n_z)
    D = _draw_contracting(rng, nz, 1.0, 0.5, 0.5)
    B = 0.8 * rng.standard_normal((nx, nz))
    C = 0.8 * rng.standard_normal((nz, nx))
    P = rng.standard_normal((nz, nx)) / math.sqrt(nx)
    while True:
        M = _draw_contracting(rng, nx, 0.5, 0.3, 0.3)
        bf = rng.uniform(-0.2, 0.2)
        bg = rng.uniform(-0.3, 0.3)
        c_f = -(log_norm(M) + abs(bf) + abs(bg) * _norm2(B @ np.linalg.solve(D, P)))
        if c_f >= 0.1:
            break
    A = M + B @ np.linalg.solve(D, C)
    if autonomous:
        Ex = np.zeros((nx, 1))
        Ez = np.zeros((nz, 1))
        at = wt = 0.0
        ef = np.zeros(nx)
        eg = np.zeros(nz)
        wx, wz = zero_signal(1), zero_signal(1)
    else:
        Ex = 0.3 * rng.standard_normal((nx, 1))
        Ez = 0.3 * rng.standard_normal((nz, 1))
        at = rng.uniform(0.0, 0.2)
        wt = rng.uniform(0.2, 1.0)
        ef = 0.2 * rng.standard_normal(nx)
        eg = 0.2 * rng.standard_normal(nz)
        wx = sinusoid([rng.uniform(0.5, 1.5)], rng.uniform(0.2, 1.0), phase=rng.uniform(0, math.pi))
        if seed % 2 == 0:
            wz = sinusoid([rng.uniform(0.5, 1.5)], rng.uniform(0.2, 1.0), phase=rng.uniform(0, math.pi))
        else:
            wz = smooth_step([rng.uniform(0.5, 1.5)], rng.uniform(1.0, 5.0), rng.uniform(0.5, 2.0))
    params = dict(A=A, B=B, C=C, D=D, P=P, E_x=Ex, E_z=Ez, beta_f=bf, beta_g=bg,
                  a_t=at, omega_t=wt, e_f=ef, e_g=eg, w_x=wx, w_z=wz,
                  name=f"perturbed-linear-{seed}")
    system, constants = _build(params, None)
    eps = eps_fraction * epsilon_star_general(constants)
    system = system.with_epsilon(eps)
    x0 = rng.uniform(-1.5, 1.5, nx)
    z0 = rng.uniform(-1.5, 1.5, nz)
    c_y = constants.c_g / eps - constants.l_gx * constants.l_fz / constants.c_g
    horizon = min(15.0 / min(constants.c_f, c_y), 80.0)
    return FamilyInstance(system, constants, x0, z0, horizon, seed, params)


def scalar_nonlinear(eps: float = 0.05, autonomous: bool = True) -> FamilyInstance:
    """A fixed scalar member used by the shipped example scenarios:

    ``x' = -1.5 x + z + 0.1 sin(x)``, ``eps z' = -z + 0.5 x + 0.2 tanh(x) + w_z``.
    """
    A = np.array([[-1.5]])  # M + B D^{-1} C with M = -1, B = 1, D = -1, C = 0.5
    params = dict(
        A=A, B=np.array([[1.0]]), C=np.array([[0.5]]), D=np.array([[-1.0]]), P=np.array([[1.0]]),
        E_x=np.zeros((1, 1)), E_z=np.array([[0.0 if autonomous else 1.0]]),
        beta_f=0.1, beta_g=0.2, a_t=0.0, omega_t=0.0, e_f=np.zeros(1), e_g=np.zeros(1),
        w_x=zero_signal(1), w_z=zero_signal(1) if autonomous else sinusoid([0.5], 0.5),
        name="scalar-nonlinear",
    )
    system, constants = _build(params, eps)
    x0 = np.array([1.0])
    z0 = np.array([-1.0])
    c_y = constants.c_g / eps - constants.l_gx * constants.l_fz / constants.c_g
    horizon = min(15.0 / min(constants.c_f, c_y), 80.0)
    return FamilyInstance(system, constants, x0, z0, horizon, 0, params)
