"""A fast battery of invariant checks that needs no test framework.

Each check returns ``(name, passed, detail)``; :func:`run_selfcheck` runs
them all.  The full property-based suite lives in the test directory.
"""

from __future__ import annotations

import math
from typing import Callable, List, Tuple

import numpy as np
from scipy import integrate as sci_integrate
from scipy.linalg import expm

from .bounds import phi1, phi2
from .integrator import IntegrationConfig, integrate_rhs
from .lti import LtiBlockSystem, contraction_certificate, epsilon_star_lti, full_generator, shifted_lti
from .ofo import epsilon_star_ofo, quadratic_problem, tracking_bounds
from .specnorm import L1, L2, LINF, induced_norm, log_norm, matrix_norm, vector_norm, weighted_l2
from .sysmodel import sinusoid

Check = Tuple[str, bool, str]


def _log_norm_oracle(rng) -> Check:
    worst = 0.0
    h = 1e-6
    for kind in (L1, L2, LINF, weighted_l2(np.diag([1.0, 2.0, 0.5]))):
        for _ in range(20):
            A = rng.standard_normal((3, 3))
            fd = (matrix_norm(np.eye(3) + h * A, kind) - 1.0) / h
            worst = max(worst, abs(fd - log_norm(A, kind)) / (10 * h * (1 + np.abs(A).max() ** 2)))
    return "log-norm vs difference quotient", worst <= 1.0, f"worst scaled gap {worst:.3g}"


def _kernel_oracle(rng) -> Check:
    worst = 0.0
    for a, b, t in ((1.0, 3.0, 2.0), (2.0, 2.0, 1.5), (0.5, 0.5 * (1 + 1e-7), 4.0)):
        q1 = sci_integrate.quad(lambda s: math.exp(-a * (t - s) - b * s), 0, t, epsabs=1e-14, epsrel=1e-12)[0]
        q2 = sci_integrate.quad(lambda s: math.exp(-a * (t - s)) * float(phi1(s, a, b)), 0, t, epsabs=1e-14, epsrel=1e-12)[0]
        worst = max(worst, abs(float(phi1(t, a, b)) - q1) / q1, abs(float(phi2(t, a, b)) - q2) / q2)
    return "kernels vs quadrature", worst < 1e-9, f"worst relative gap {worst:.3g}"


def _induced_cross(rng) -> Check:
    F = rng.standard_normal((3, 4))
    ok = True
    for a in (L1, L2, LINF):
        for b in (L1, L2, LINF):
            val = float(induced_norm(F, a, b))
            V = rng.standard_normal((4, 4000))
            ratio = max(vector_norm(F @ v, b) / vector_norm(v, a) for v in V.T)
            ok &= ratio <= val * (1 + 1e-9)
    return "induced norms dominate sampled ratios", bool(ok), "9 norm pairs"


def _integrator(rng) -> Check:
    M = np.array([[-1.0, 2.0], [-2.0, -1.0]])
    cfg = IntegrationConfig(t_end=3.0, rel_tol=1e-10, abs_tol=1e-12, n_grid=31)
    tr = integrate_rhs(lambda t, y: M @ y, np.array([1.0, 0.0]), cfg)
    ref = np.array([expm(M * t) @ np.array([1.0, 0.0]) for t in tr.times])
    err = float(np.max(np.abs(tr.x - ref)))
    return "integrator vs matrix exponential", err < 1e-8, f"max error {err:.3g}"


def _lti_desk(rng) -> Check:
    s = LtiBlockSystem(1.0, 1.0, -3.0, -1.0)
    cert = contraction_certificate(s, 0.1)
    ok = abs(epsilon_star_lti(s) - 1 / 6) < 1e-12 and abs(cert.rate - 1.0) < 1e-12 and bool(cert.validated)
    ev1 = np.sort_complex(np.linalg.eigvals(shifted_lti(s, 0.1)))
    ev2 = np.sort_complex(np.linalg.eigvals(full_generator(s, 0.1)))
    ok &= float(np.max(np.abs(ev1 - ev2))) < 1e-8
    return "scalar LTI thresholds, rate and similarity", bool(ok), f"rate {cert.rate:.6g}"


def _ofo_desk(rng) -> Check:
    p = quadratic_problem(-1.0, 1.0, 1.0, w_z=sinusoid([1.0], 0.5), epsilon=0.2)
    u, z = tracking_bounds(p)
    ok = abs(epsilon_star_ofo(p) - 1.0) < 1e-12 and abs(u - 0.625) < 1e-12 and abs(z - 0.25) < 1e-12
    return "scalar OFO threshold and tracking bounds", ok, f"({u:.6g}, {z:.6g})"


CHECKS: List[Callable] = [_log_norm_oracle, _kernel_oracle, _induced_cross, _integrator, _lti_desk, _ofo_desk]


def run_selfcheck(seed: int = 0) -> List[Check]:
    rng = np.random.default_rng(seed)
    return [chk(rng) for chk in CHECKS]
