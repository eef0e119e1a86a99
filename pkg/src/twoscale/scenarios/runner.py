"""Execute scenarios: simulate, evaluate bounds, verify and write artifacts.

Layout of an output directory::

    report.json                  merged report (all runs)
    trajectories.csv             \
    envelopes.csv                 |  single-run scenarios
    trajectories.png, errors.png /
    run-<k>/...                  the same files per run when a scenario
                                 lists several eps values

Runs for different eps are independent, so ``jobs > 1`` fans them out to
worker processes.  Each worker writes only inside its own directory and
returns its part of the report; the merge happens in the parent.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..bounds import (
    _threshold,
    displayed_leading_terms,
    envelope_autonomous,
    envelope_x_general,
    envelope_y,
    envelope_z_general,
    verify_bound,
)
from ..errors import NumericalError, ThresholdError, ValidationError
from ..integrator import IntegrationConfig, integrate, integrate_lti_exact
from ..lti import (
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
    scaled_block,
    shifted_lti,
)
from ..ofo import (
    closed_loop,
    derived,
    epsilon_star_ofo,
    ofo_constants,
    open_loop_gradient_flow,
    optimizer,
    quadratic_problem,
    tracking_bounds,
    tracking_envelopes,
)
from ..specnorm import L1, L2, LINF, spectral_abscissa, vector_norm
from ..sysmodel import (
    ConstantsTable,
    SamplingBox,
    constant,
    estimate_constants,
    quasi_steady_state,
    ramp,
    reduced_model,
    sinusoid,
    smooth_step,
    zero_signal,
)
from . import plots
from .family import perturbed_linear, scalar_nonlinear
from .schema import REPORT_SCHEMA_VERSION, UNITS, Scenario, validate_report

__all__ = ["run_scenario", "RunOutcome", "build_signal", "EXIT_OK", "EXIT_FAIL", "EXIT_INVALID", "EXIT_NUMERICAL"]

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3
GAIN_MATRIX_NOTE = (
    "the LTI gain matrix is the scalar 2x2 majorant built from the log-norms of A_red and D "
    "and induced norms of the off-diagonal blocks, not a block matrix of matrices"
)
NORMS = {"L1": L1, "L2": L2, "Linf": LINF}


def build_signal(spec: Dict[str, Any], dim: int):
    kind = spec.get("type", "zero")
    offset = spec.get("offset")
    if kind == "zero":
        return zero_signal(dim)
    if kind == "constant":
        return constant(spec["level"])
    if kind == "sinusoid":
        return sinusoid(spec["amplitude"], spec["omega"], spec.get("phase", 0.0), offset)
    if kind == "ramp":
        return ramp(spec["slope"], offset)
    if kind == "smooth_step":
        return smooth_step(spec["height"], spec["t0"], spec["width"], offset)
    raise ValidationError(f"unknown signal type {kind!r}")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def _verification(name, rep=None, passed=None, gating=True, **extra):
    out = {"name": name, "gating": gating}
    if rep is not None:
        out.update(passed=bool(rep.passed), worst_margin=rep.worst_margin, worst_ratio=rep.worst_ratio, worst_time=rep.worst_time)
    else:
        out["passed"] = bool(passed)
    out.update(extra)
    return out


def _write_csv(path: Path, header: List[str], columns: List[np.ndarray]):
    data = np.column_stack([np.asarray(c, dtype=float).reshape(len(columns[0]), -1) for c in columns])
    if data.shape[1] != len(header):
        raise AssertionError("CSV header and data disagree")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    return str(path)


def _names(prefix, n):
    return [f"{prefix}_{i}" for i in range(n)]


def _config(sc: Scenario, default_t_end: float, default_points: int = 801) -> IntegrationConfig:
    integ = dict(sc.integration)
    return IntegrationConfig(
        t_end=integ.get("t_end", default_t_end),
        rel_tol=integ.get("rel_tol", 1e-9),
        abs_tol=integ.get("abs_tol", 1e-11),
        max_step=integ.get("max_step", math.inf),
        fast_step_cap=integ.get("fast_step_cap", 0.5),
        n_grid=int(sc.grid.get("points", default_points)),
    )


def _stats(traj):
    return {k: (float(v) if isinstance(v, (int, float, np.floating, np.integer)) else v) for k, v in traj.stats.items()}


def _sim_artifacts(run_dir: Path, figures: bool, title: str, t, x, z, x_r, z_star, y_norm, x_err, z_err,
                   env_x, env_z, slack, extra_cols=None, labels=("x", "z")):
    header = ["t"] + _names("x", x.shape[1]) + _names("z", z.shape[1]) + _names("x_r", x_r.shape[1]) \
        + _names("z_star", z_star.shape[1]) + ["y_norm", "x_err", "z_err"]
    cols = [t, x, z, x_r, z_star, y_norm, x_err, z_err]
    for name, col in (extra_cols or {}).items():
        header.append(name)
        cols.append(col)
    arts = {"trajectories_csv": _write_csv(run_dir / "trajectories.csv", header, cols)}
    ex = np.full_like(t, np.nan) if env_x is None else env_x
    ez = np.full_like(t, np.nan) if env_z is None else env_z
    arts["envelopes_csv"] = _write_csv(
        run_dir / "envelopes.csv",
        ["t", "envelope_x", "envelope_z", "margin_x", "margin_z"],
        [t, ex, ez, ex * (1 + slack) - x_err, ez * (1 + slack) - z_err],
    )
    if figures:
        arts["trajectories_png"] = plots.plot_states(run_dir / "trajectories.png", t, x, z, x_r, z_star, title, *labels)
        arts["errors_png"] = plots.plot_errors(run_dir / "errors.png", t, x_err, z_err, env_x, env_z, title)
    return arts


# ---------------------------------------------------------------------------
# kinds


def _family(sc: Scenario):
    sysd = sc.system
    auto = sc.kind == "autonomous"
    if sysd["preset"] == "perturbed-linear":
        return perturbed_linear(sysd.get("seed", 0), sysd.get("n_x"), sysd.get("n_z"), autonomous=auto)
    return scalar_nonlinear(autonomous=auto)


def _constants(sc: Scenario, fi, seed):
    if sc.constants == "certified":
        return fi.constants
    if sc.constants == "estimate":
        return estimate_constants(fi.system, SamplingBox(seed=seed))
    vals = dict(sc.constants)
    for k in ("c_f", "c_g"):
        if k not in vals:
            raise ValidationError(f"constants.{k} is required when constants are supplied")
    return ConstantsTable(**vals)


def _run_general(sc, entry, run_dir, slack, seed, figures):
    fi = _family(sc)
    c = _constants(sc, fi, seed)
    thr = _threshold(c)
    mode, val = entry
    eps = val if mode == "absolute" else val * thr
    system = fi.system.with_epsilon(eps)
    x0 = np.asarray(sc.initial.get("x", fi.x0), dtype=float)
    z0 = np.asarray(sc.initial.get("z", fi.z0), dtype=float)
    if x0.size != system.n_x or z0.size != system.n_z:
        raise ValidationError(f"initial state sizes must be ({system.n_x}, {system.n_z})")
    if not eps < thr:
        raise ThresholdError(f"eps = {eps:.6g} is not below the admissible bound {thr:.6g}", eps=eps, threshold=thr)
    c_y = c.c_g / eps - c.l_gx * c.l_fz / c.c_g
    cfg = _config(sc, min(15.0 / min(c.c_f, c_y), 80.0))
    full = integrate(system, np.r_[x0, z0], cfg)
    red = integrate(reduced_model(system), x0, cfg)
    t = full.times
    wz = [system.w_z(ti) for ti in t]
    z_star = np.array([quasi_steady_state(system, xr, w, 0.0) for xr, w in zip(red.x, wz)])
    z_qss = np.array([quasi_steady_state(system, xx, w, 0.0) for xx, w in zip(full.x, wz)])
    x_err = np.linalg.norm(full.x - red.x, axis=1)
    z_err = np.linalg.norm(full.z - z_star, axis=1)
    y_norm = np.linalg.norm(full.z - z_qss, axis=1)
    fred0 = vector_norm(reduced_model(system).rhs(0.0, x0), system.x_norm)
    y0 = float(y_norm[0])
    key = {"epsilon_star_general": thr}
    ver = []
    tags = []
    notes = []
    if sc.kind == "general":
        wx, wz_bar = system.w_x_sig.derivative_bound, system.w_z_sig.derivative_bound
        Ex = envelope_x_general(c, eps, 0.0, y0, fred0, wx, wz_bar)
        Ez = envelope_z_general(c, eps, 0.0, y0, fred0, wx, wz_bar)
        Ey = envelope_y(c, eps, y0, fred0, wx, wz_bar)
        rx, rz, ry = verify_bound(t, x_err, Ex, slack), verify_bound(t, z_err, Ez, slack), verify_bound(t, y_norm, Ey, slack)
        tail = float(np.max(y_norm[int(0.8 * len(t)):]))
        tx, tz = displayed_leading_terms(c, eps, wx, wz_bar)
        key.update(asymptote_x=Ex.asymptote, asymptote_z=Ez.asymptote, limsup_y=Ey.asymptote,
                   displayed_leading_x=tx, displayed_leading_z=tz, c_y=Ey.parts["c_y"], tail_max_y=tail)
        ver += [_verification("envelope_x", rx), _verification("envelope_z", rz), _verification("envelope_y", ry),
                _verification("limsup_y", passed=tail <= Ey.asymptote * 1.02, worst_ratio=tail / Ey.asymptote if Ey.asymptote > 0 else math.inf)]
        tags = [Ex.case_tag]
        env_x, env_z = Ex(t), Ez(t)
        notes.append("slow-error asymptote includes the 1/c_f factor from integrating the slow error inequality")
    else:
        gx, gz = envelope_autonomous(c, eps, y0, fred0)
        rx, rz = verify_bound(t, x_err, gx, slack), verify_bound(t, z_err, gz, slack)
        ver += [_verification("envelope_autonomous_x", rx), _verification("envelope_autonomous_z", rz)]
        key.update(sup_x_err=float(np.max(x_err)), sup_z_err=float(np.max(z_err)))
        tags = [gx.case_tag]
        env_x, env_z = gx(t), gz(t)
    if sc.constants == "estimate":
        notes.append("constants were estimated by sampling; envelopes built from them are not certified")
    arts = _sim_artifacts(run_dir, figures, f"{sc.name} (eps={eps:.4g})", t, full.x, full.z, red.x, z_star, y_norm,
                          x_err, z_err, env_x, env_z, slack)
    return dict(epsilon=eps, thresholds={"epsilon_star_general": thr}, key_values=key, constants=c.as_dict(),
                verifications=ver, case_tags=tags, integrator={"full": _stats(full), "reduced": _stats(red)},
                artifacts=arts, notes=notes, horizon=cfg.t_end)


def _run_ofo(sc, entry, run_dir, slack, seed, figures):
    s = sc.system
    E = np.array(s["E"])
    wz = build_signal(sc.disturbance.get("w_z", {"type": "zero"}), E.shape[1])
    p = quadratic_problem(s["A"], s["B"], E, s["q_phi"], s["q_psi"], s["u_ref"], wz, epsilon=1.0)
    thr = epsilon_star_ofo(p)
    mode, val = entry
    eps = val if mode == "absolute" else val * thr
    p = replace(p, epsilon=eps)
    u_bound, z_bound = tracking_bounds(p)
    d = derived(p)
    nu, nz = p.n_u, p.n_z
    u0 = np.asarray(sc.initial.get("u", sc.initial.get("x", np.zeros(nu))), dtype=float)
    z0 = np.asarray(sc.initial.get("z", np.zeros(nz)), dtype=float)
    cfg = _config(sc, 60.0, 1201)
    burn = sc.verification.get("burn_in", cfg.t_end / 3)
    system = closed_loop(p)
    full = integrate(system, np.r_[u0, z0], cfg)
    flow = open_loop_gradient_flow(p)
    red = integrate(lambda t, u: flow(u, wz.value(t)), u0, cfg)
    t = full.times
    W = np.array([wz.value(ti) for ti in t])
    ustar = np.empty((t.size, nu))
    guess = None
    for i, w in enumerate(W):
        guess = optimizer(p, w, tol=1e-11, u0=guess)
        ustar[i] = guess
    zeq = ustar @ d.G.T + W @ d.H.T
    z_star = red.x @ d.G.T + W @ d.H.T
    z_qss = full.x @ d.G.T + W @ d.H.T
    x_err = np.linalg.norm(full.x - red.x, axis=1)
    z_err = np.linalg.norm(full.z - z_star, axis=1)
    y_norm = np.linalg.norm(full.z - z_qss, axis=1)
    track_u = np.linalg.norm(full.x - ustar, axis=1)
    track_z = np.linalg.norm(full.z - zeq, axis=1)
    after = t >= burn
    if not np.any(after):
        raise ValidationError(f"burn-in {burn} leaves no samples before t_end {cfg.t_end}")
    sup_u, sup_z = float(np.max(track_u[after])), float(np.max(track_z[after]))
    eu, ez = tracking_envelopes(p, u0, z0)
    ru, rz = verify_bound(t, track_u, eu, slack), verify_bound(t, track_z, ez, slack)
    ver = [
        _verification("tracking_u", passed=sup_u <= u_bound * (1 + slack), worst_ratio=sup_u / u_bound if u_bound > 0 else math.inf,
                      worst_margin=u_bound * (1 + slack) - sup_u),
        _verification("tracking_z", passed=sup_z <= z_bound * (1 + slack), worst_ratio=sup_z / z_bound if z_bound > 0 else math.inf,
                      worst_margin=z_bound * (1 + slack) - sup_z),
        _verification("derived_envelope_u", ru, gating=False),
        _verification("derived_envelope_z", rz, gating=False),
    ]
    c = ofo_constants(p)
    key = dict(epsilon_star_ofo=thr, u_bound_asymptotic=u_bound, z_bound_asymptotic=z_bound,
               sup_u_tracking=sup_u, sup_z_tracking=sup_z, burn_in=burn)
    notes = ["derived_envelope_* are transient envelopes assembled by the triangle inequality through the "
             "reduced flow; they are informative and do not gate the exit code"]
    arts = _sim_artifacts(run_dir, figures, f"{sc.name} (eps={eps:.4g})", t, full.x, full.z, red.x, z_star, y_norm,
                          x_err, z_err, None, None, slack,
                          extra_cols={"track_u": track_u, "track_z": track_z, "envelope_track_u": eu(t), "envelope_track_z": ez(t)},
                          labels=("u", "z"))
    if figures:
        arts["tracking_png"] = plots.plot_errors(run_dir / "tracking.png", t, track_u, track_z, eu(t), ez(t),
                                                 f"{sc.name}: distance to the moving optimum")
    return dict(epsilon=eps, thresholds={"epsilon_star_ofo": thr}, key_values=key, constants=c.as_dict(),
                verifications=ver, case_tags=[eu.case_tag], integrator={"closed_loop": _stats(full), "reduced": _stats(red)},
                artifacts=arts, notes=notes, horizon=cfg.t_end)


def _lti_system(sc):
    s = sc.system
    norm = NORMS[s.get("norm", "L2")]
    return LtiBlockSystem(np.array(s["A"]), np.array(s["B"]), np.array(s["C"]), np.array(s["D"]), norm, norm)


def _run_lti(sc, entry, run_dir, slack, seed, figures):
    s = _lti_system(sc)
    e0 = epsilon_star_0_lti(s)
    el = epsilon_star_lti(s)
    mode, val = entry
    eps = val if mode == "absolute" else val * min(e0, el)
    x0 = np.asarray(sc.initial["x"], dtype=float)
    z0 = np.asarray(sc.initial["z"], dtype=float)
    xr0 = np.asarray(sc.initial.get("x_r", x0), dtype=float)
    Ar = reduced_lti(s)
    env_x, env_z = envelope_lti(s, eps, x0, z0, xr0)
    full_x, full_z = envelope_lti(s, eps, x0, z0, xr0, coupling="full")
    cf = env_x.parts["c_f"]
    cfg = _config(sc, min(15.0 / cf, 200.0))
    t = cfg.grid()
    tr = integrate_lti_exact(full_generator(s, eps), np.r_[x0, z0], t)
    red = integrate_lti_exact(Ar, xr0, t)
    X, Z = tr.x[:, : s.n_x], tr.x[:, s.n_x:]
    K = s.DinvC
    z_star = -(red.x @ K.T)
    x_err = np.array([vector_norm(v, s.x_norm) for v in X - red.x])
    z_err = np.array([vector_norm(v, s.z_norm) for v in Z - z_star])
    y_norm = np.array([vector_norm(v, s.z_norm) for v in Z + X @ K.T])
    ex, ez = env_x(t), env_z(t)
    ver = [
        _verification("envelope_lti_x", verify_bound(t, x_err, ex, slack)),
        _verification("envelope_lti_z", verify_bound(t, z_err, ez, slack)),
        _verification("envelope_lti_full_x", verify_bound(t, x_err, full_x, slack)),
        _verification("envelope_lti_full_z", verify_bound(t, z_err, full_z, slack)),
    ]
    ev_shift = np.sort_complex(np.linalg.eigvals(shifted_lti(s, eps)))
    ev_full = np.sort_complex(np.linalg.eigvals(full_generator(s, eps)))
    dist = float(_spectrum_distance(ev_shift, ev_full))
    scale = max(1.0, float(np.max(np.abs(ev_full))))
    ver.append(_verification("similarity_spectrum", passed=dist <= 1e-8 * scale, worst_margin=1e-8 * scale - dist))
    key = dict(epsilon_star_0_lti=e0, epsilon_star_lti=el, c_f=cf, c_Ly=env_x.parts["c_Ly"])
    notes = [GAIN_MATRIX_NOTE,
             "envelope_lti_* are the closed forms that neglect the feedback of the slow error into the fast "
             "deviation; envelope_lti_full_* keep it and are guaranteed"]
    G = gain_matrix_lti(s, eps)
    key.update(gain_11=G[0, 0], gain_12=G[0, 1], gain_21=G[1, 0], gain_22=G[1, 1])
    if eps < el:
        validate = sc.verification.get("validate_certificate", True)
        cert = contraction_certificate(s, eps, validate=validate, seed=seed)
        key.update(contraction_rate=cert.rate, weight_N1=cert.weights.N1, weight_N2=cert.weights.N2)
        if validate:
            key["fitted_rate"] = cert.fitted_rate
            ver.append(_verification("certificate_decay", passed=bool(cert.validated),
                                     worst_ratio=cert.fitted_rate / cert.rate if cert.rate > 0 else math.inf))
    else:
        notes.append(f"eps = {eps:.6g} is not below the contractivity threshold {el:.6g}; no certificate issued")
    arts = _sim_artifacts(run_dir, figures, f"{sc.name} (eps={eps:.4g})", t, X, Z, red.x, z_star, y_norm,
                          x_err, z_err, ex, ez, slack,
                          extra_cols={"envelope_full_x": full_x(t), "envelope_full_z": full_z(t)})
    return dict(epsilon=eps, thresholds={"epsilon_star_0_lti": e0, "epsilon_star_lti": el}, key_values=key, constants=None,
                verifications=ver, case_tags=[env_x.case_tag], integrator=dict(tr.stats), artifacts=arts, notes=notes,
                horizon=cfg.t_end)


def _spectrum_distance(a, b):
    # symmetric nearest-neighbour distance between two eigenvalue sets
    if a.size != b.size:
        return math.inf
    d1 = max(float(np.min(np.abs(b - x))) for x in a)
    d2 = max(float(np.min(np.abs(a - x))) for x in b)
    return max(d1, d2)


def _run_gain(sc, entry, run_dir, slack, seed, figures):
    p = GainMatrixParams(**sc.system)
    eps = entry[1]
    chk = hurwitz_gain_check(p, eps)
    false_cert = chk.verdict == "below_threshold_hurwitz" and not chk.hurwitz
    ver = [_verification("no_false_certificate", passed=not false_cert)]
    key = dict(threshold=chk.threshold, sound_threshold=chk.sound_threshold,
               spectral_abscissa=float(np.max(chk.eigenvalues.real)), verdict_below_threshold=float(chk.verdict == "below_threshold_hurwitz"))
    notes = [f"verdict: {chk.verdict}"]
    if false_cert:
        notes.append("the min-of-three threshold certified a matrix that is not Hurwitz")
    arts = {}
    if figures:
        grid = np.logspace(math.log10(eps) - 2, math.log10(eps) + 2, 60)
        ab = [float(np.max(np.linalg.eigvals(p.matrix(e)).real)) for e in grid]
        arts["spectrum_png"] = plots.plot_abscissa(run_dir / "spectrum.png", grid, ab, chk.threshold, f"{sc.name}: gain matrix")
    return dict(epsilon=eps, thresholds={"gain_threshold": chk.threshold, "sound_threshold": chk.sound_threshold},
                key_values=key, constants=None, verifications=ver, case_tags=[], integrator=None, artifacts=arts, notes=notes)


def _run_diagram(sc, run_dir, slack, seed, figures):
    s = _lti_system(sc)
    rep = diagram_check(s, sc.epsilon)
    ver = [_verification("implications", passed=not rep.counterexamples)]
    if rep.ordering_ok is not None:
        ver.append(_verification("threshold_ordering", passed=rep.ordering_ok))
    key = dict(p11=float(rep.p11), p21=float(rep.p21), epsilon_star_1=rep.eps_star_1, epsilon_star_2=rep.eps_star_2)
    notes = [f"premises (P11, P21) = ({rep.p11}, {rep.p21})"]
    notes += [f"counterexample under {name} at eps = {e:.6g}" for name, e in rep.counterexamples]
    arts = {}
    if figures:
        ab = [spectral_abscissa(scaled_block(s, e)) for e in rep.eps_grid]
        arts["spectrum_png"] = plots.plot_abscissa(run_dir / "spectrum.png", rep.eps_grid, ab, rep.eps_star_2,
                                                   f"{sc.name}: scaled block matrix")
    return dict(epsilon=None, thresholds={"epsilon_star_1": rep.eps_star_1, "epsilon_star_2": rep.eps_star_2},
                key_values=key, constants=None, verifications=ver, case_tags=[], integrator=None, artifacts=arts,
                notes=notes, grid=list(rep.eps_grid))


_RUNNERS = {"general": _run_general, "autonomous": _run_general, "ofo": _run_ofo, "lti": _run_lti, "gain-lemma": _run_gain}


def _execute(args) -> Dict[str, Any]:
    sc, index, entry, run_dir, slack, seed, figures = args
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    base = {"index": index, "epsilon": None, "thresholds": {}, "key_values": {}, "constants": None, "verifications": [],
            "case_tags": [], "integrator": None, "artifacts": {}, "notes": [], "error": None, "exit_code": EXIT_OK}
    if entry is not None:
        base["epsilon_entry"] = {"mode": entry[0], "value": entry[1]}
    t0 = time.perf_counter()
    try:
        if sc.kind == "diagram":
            res = _run_diagram(sc, run_dir, slack, seed, figures)
        else:
            res = _RUNNERS[sc.kind](sc, entry, run_dir, slack, seed, figures)
        base.update(res)
        if not all(v["passed"] for v in base["verifications"] if v["gating"]):
            base["exit_code"] = EXIT_FAIL
    except (ValidationError, ThresholdError) as exc:
        base.update(error=f"invalid input: {exc}", exit_code=EXIT_INVALID)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        base.update(error=f"numerical failure: {exc}", exit_code=EXIT_NUMERICAL)
    base["runtime_seconds"] = time.perf_counter() - t0
    return _jsonable(base)


class RunOutcome:
    def __init__(self, report: Dict[str, Any], out_dir: Path):
        self.report = report
        self.out_dir = out_dir

    @property
    def exit_code(self) -> int:
        return self.report["exit_code"]


def run_scenario(sc: Scenario, out_dir, slack_percent: Optional[float] = None, seed: int = 0,
                 jobs: int = 1, figures: bool = True) -> RunOutcome:
    """Run every eps of ``sc``, write artifacts under ``out_dir`` and return the merged report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if slack_percent is None:
        slack_percent = sc.verification.get("slack_percent", 1.0)
    if slack_percent < 0:
        raise ValidationError("slack must be nonnegative")
    slack = slack_percent / 100.0
    entries: List[Optional[Tuple[str, float]]] = [None] if sc.kind == "diagram" else sc.eps_values
    multi = len(entries) > 1
    tasks = [(sc, i, e, str(out_dir / f"run-{i}" if multi else out_dir), slack, seed, figures) for i, e in enumerate(entries)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_execute, tasks))
    else:
        runs = [_execute(t) for t in tasks]

    codes = [r["exit_code"] for r in runs]
    if EXIT_NUMERICAL in codes:
        code = EXIT_NUMERICAL
    elif EXIT_INVALID in codes:
        code = EXIT_INVALID
    elif EXIT_FAIL in codes:
        code = EXIT_FAIL
    else:
        code = EXIT_OK
    worst: Dict[str, Any] = {}
    for r in runs:
        for v in r["verifications"]:
            m = v.get("worst_margin")
            if isinstance(m, (int, float)):
                worst[v["name"]] = m if v["name"] not in worst else min(worst[v["name"]], m)
    notes = []
    if sc.kind == "lti":
        notes.append(GAIN_MATRIX_NOTE)
    if multi:
        notes.append("several eps values: per-run artifacts are in run-<index>/ subdirectories")
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": {"name": "twoscale", "version": __version__},
        "scenario": {"name": sc.name, "kind": sc.kind, "source": sc.source, "seed": int(seed),
                     "slack_percent": float(slack_percent), "description": sc.description},
        "units": dict(UNITS),
        "runs": runs,
        "key_values": dict(runs[0]["key_values"]) if runs else {},
        "passed": code == EXIT_OK,
        "exit_code": code,
        "worst_margins": _jsonable(worst),
        "notes": notes,
    }
    validate_report(report)
    with open(out_dir / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")
    return RunOutcome(report, out_dir)
