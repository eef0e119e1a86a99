"""Scenario files (YAML) and the report format (JSON).

A scenario is a mapping with a ``schema_version`` field.  Parsing keeps the
source line of every node so validation messages can say where the
problem is, e.g. ``ofo.yaml:12: system.A: expected a square matrix``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from ..errors import ValidationError

__all__ = [
    "SCENARIO_SCHEMA_VERSION",
    "REPORT_SCHEMA_VERSION",
    "KINDS",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "parse_scenario",
    "REPORT_SCHEMA",
    "validate_report",
    "UNITS",
]

SCENARIO_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = "1.0"
KINDS = ("general", "autonomous", "ofo", "lti", "gain-lemma", "diagram")
FIELD_PRESETS = ("perturbed-linear", "scalar-nonlinear")
SIGNAL_TYPES = ("zero", "constant", "sinusoid", "ramp", "smooth_step")


class ScenarioError(ValidationError):
    """Scenario parse or validation failure, with the offending location."""

    def __init__(self, message: str, source: str = "<scenario>", line: Optional[int] = None, path: str = ""):
        where = f"{source}:{line}" if line is not None else source
        prefix = f"{where}: {path}: " if path else f"{where}: "
        super().__init__(prefix + message)
        self.source = source
        self.line = line
        self.path = path


def _line_index(node, path=(), out=None):
    # maps dotted field paths to 1-based source lines
    out = {} if out is None else out
    out[".".join(map(str, path))] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


@dataclass
class _Ctx:
    source: str
    lines: Dict[str, int]

    def fail(self, path: str, message: str):
        line = self.lines.get(path)
        probe = path
        while line is None and "." in probe:
            probe = probe.rsplit(".", 1)[0]
            line = self.lines.get(probe)
        raise ScenarioError(message, self.source, line if line is not None else self.lines.get(""), path)


@dataclass
class Scenario:
    """Validated scenario contents; plain data so it can cross process boundaries."""

    name: str
    kind: str
    system: Dict[str, Any]
    epsilon: List[float] = field(default_factory=list)
    epsilon_fraction: List[float] = field(default_factory=list)
    constants: Any = "certified"
    disturbance: Dict[str, Any] = field(default_factory=dict)
    initial: Dict[str, Any] = field(default_factory=dict)
    integration: Dict[str, Any] = field(default_factory=dict)
    grid: Dict[str, Any] = field(default_factory=dict)
    verification: Dict[str, Any] = field(default_factory=dict)
    description: str = ""
    source: str = "<scenario>"

    @property
    def eps_values(self) -> List[Tuple[str, float]]:
        """``("absolute", eps)`` or ``("fraction", f)`` entries, in file order."""
        if self.epsilon:
            return [("absolute", e) for e in self.epsilon]
        return [("fraction", f) for f in self.epsilon_fraction]


def _as_number(ctx, path, v, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        ctx.fail(path, "expected a finite number")
    if positive and not v > 0:
        ctx.fail(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        ctx.fail(path, f"must be nonnegative, got {v}")
    return v


def _as_matrix(ctx, path, v, shape=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [[v]]
    if not isinstance(v, list) or not v:
        ctx.fail(path, "expected a matrix (list of rows)")
    rows = []
    for i, r in enumerate(v):
        if isinstance(r, (int, float)) and not isinstance(r, bool):
            r = [r]
        if not isinstance(r, list):
            ctx.fail(f"{path}.{i}", "expected a row (list of numbers)")
        rows.append([_as_number(ctx, f"{path}.{i}.{j}", x) for j, x in enumerate(r)])
    if len({len(r) for r in rows}) != 1:
        ctx.fail(path, "rows have different lengths")
    M = np.array(rows, dtype=float)
    if shape is not None:
        for want, got, axis in zip(shape, M.shape, ("rows", "columns")):
            if want is not None and want != got:
                ctx.fail(path, f"expected {want} {axis}, got {got}")
    return M


def _as_vector(ctx, path, v, n=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        ctx.fail(path, "expected a list of numbers")
    out = [_as_number(ctx, f"{path}.{i}", x) for i, x in enumerate(v)]
    if n is not None and len(out) != n:
        ctx.fail(path, f"expected {n} entries, got {len(out)}")
    return out


def _mapping(ctx, path, v, allowed):
    if v is None:
        return {}
    if not isinstance(v, dict):
        ctx.fail(path, "expected a mapping")
    for k in v:
        if k not in allowed:
            ctx.fail(f"{path}.{k}" if path else str(k), f"unknown field {k!r}; allowed: {', '.join(sorted(allowed))}")
    return v


def _signal(ctx, path, spec, dim):
    spec = _mapping(ctx, path, spec, {"type", "amplitude", "omega", "phase", "level", "slope", "height", "t0", "width", "offset"})
    kind = spec.get("type", "zero")
    if kind not in SIGNAL_TYPES:
        ctx.fail(f"{path}.type", f"unknown signal type {kind!r}; one of {', '.join(SIGNAL_TYPES)}")
    out = {"type": kind}
    if kind == "constant":
        out["level"] = _as_vector(ctx, f"{path}.level", spec.get("level"), dim)
    elif kind == "sinusoid":
        out["amplitude"] = _as_vector(ctx, f"{path}.amplitude", spec.get("amplitude"), dim)
        out["omega"] = _as_number(ctx, f"{path}.omega", spec.get("omega"))
        out["phase"] = _as_number(ctx, f"{path}.phase", spec.get("phase", 0.0))
    elif kind == "ramp":
        out["slope"] = _as_vector(ctx, f"{path}.slope", spec.get("slope"), dim)
    elif kind == "smooth_step":
        out["height"] = _as_vector(ctx, f"{path}.height", spec.get("height"), dim)
        out["t0"] = _as_number(ctx, f"{path}.t0", spec.get("t0", 0.0))
        out["width"] = _as_number(ctx, f"{path}.width", spec.get("width", 1.0), positive=True)
    if "offset" in spec and kind != "zero":
        out["offset"] = _as_vector(ctx, f"{path}.offset", spec["offset"], dim)
    return out


def _eps_list(ctx, doc):
    has_abs = "epsilon" in doc
    has_frac = "epsilon_fraction" in doc
    if has_abs == has_frac:
        ctx.fail("epsilon", "give exactly one of 'epsilon' (values) or 'epsilon_fraction' (multiples of the threshold)")
    key = "epsilon" if has_abs else "epsilon_fraction"
    v = doc[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        ctx.fail(key, "epsilon list must be a nonempty list of positive numbers")
    vals = [_as_number(ctx, f"{key}.{i}", e, positive=True) for i, e in enumerate(v)]
    if not has_abs and any(f >= 1 for f in vals):
        ctx.fail(key, "threshold fractions must lie in (0, 1)")
    return (vals, []) if has_abs else ([], vals)


def _integration(ctx, spec):
    spec = _mapping(ctx, "integration", spec, {"t_end", "rel_tol", "abs_tol", "max_step", "fast_step_cap"})
    out = {}
    for k in ("t_end", "rel_tol", "abs_tol", "max_step", "fast_step_cap"):
        if k in spec:
            out[k] = _as_number(ctx, f"integration.{k}", spec[k], positive=True)
    return out


def _system(ctx, kind, spec):
    if kind in ("general", "autonomous"):
        spec = _mapping(ctx, "system", spec, {"preset", "seed", "n_x", "n_z"})
        preset = spec.get("preset")
        if preset not in FIELD_PRESETS:
            ctx.fail("system.preset", f"unknown field preset {preset!r}; one of {', '.join(FIELD_PRESETS)}")
        out = {"preset": preset}
        if preset == "perturbed-linear":
            seed = spec.get("seed", 0)
            if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
                ctx.fail("system.seed", "seed must be a nonnegative integer")
            out["seed"] = seed
            for k in ("n_x", "n_z"):
                if k in spec:
                    n = spec[k]
                    if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= 6:
                        ctx.fail(f"system.{k}", "dimension must be an integer in 1..6")
                    out[k] = n
        return out
    if kind == "ofo":
        spec = _mapping(ctx, "system", spec, {"A", "B", "E", "costs"})
        for k in ("A", "B", "E"):
            if k not in spec:
                ctx.fail("system", f"missing matrix {k}")
        A = _as_matrix(ctx, "system.A", spec["A"])
        n = A.shape[0]
        if A.shape != (n, n):
            ctx.fail("system.A", f"expected a square matrix, got {A.shape}")
        B = _as_matrix(ctx, "system.B", spec["B"], (n, None))
        E = _as_matrix(ctx, "system.E", spec["E"], (n, None))
        costs = _mapping(ctx, "system.costs", spec.get("costs"), {"phi", "psi", "q_phi", "q_psi", "u_ref"})
        for k in ("phi", "psi"):
            if costs.get(k, "quadratic") != "quadratic":
                ctx.fail(f"system.costs.{k}", "only 'quadratic' costs are supported in scenario files")
        out = {"A": A.tolist(), "B": B.tolist(), "E": E.tolist(),
               "q_phi": _as_number(ctx, "system.costs.q_phi", costs.get("q_phi", 1.0), positive=True),
               "q_psi": _as_number(ctx, "system.costs.q_psi", costs.get("q_psi", 1.0), nonneg=True)}
        out["u_ref"] = _as_vector(ctx, "system.costs.u_ref", costs.get("u_ref", [0.0] * B.shape[1]), B.shape[1])
        return out
    if kind in ("lti", "diagram"):
        spec = _mapping(ctx, "system", spec, {"A", "B", "C", "D", "norm"})
        for k in ("A", "B", "C", "D"):
            if k not in spec:
                ctx.fail("system", f"missing matrix {k}")
        A = _as_matrix(ctx, "system.A", spec["A"])
        D = _as_matrix(ctx, "system.D", spec["D"])
        if A.shape[0] != A.shape[1]:
            ctx.fail("system.A", f"expected a square matrix, got {A.shape}")
        if D.shape[0] != D.shape[1]:
            ctx.fail("system.D", f"expected a square matrix, got {D.shape}")
        B = _as_matrix(ctx, "system.B", spec["B"], (A.shape[0], D.shape[0]))
        C = _as_matrix(ctx, "system.C", spec["C"], (D.shape[0], A.shape[0]))
        norm = spec.get("norm", "L2")
        if norm not in ("L1", "L2", "Linf"):
            ctx.fail("system.norm", "norm must be one of L1, L2, Linf")
        return {"A": A.tolist(), "B": B.tolist(), "C": C.tolist(), "D": D.tolist(), "norm": norm}
    if kind == "gain-lemma":
        names = ("a11", "a12", "a21", "a22", "d22", "d11", "d21")
        spec = _mapping(ctx, "system", spec, set(names))
        out = {}
        for k in names:
            if k not in spec and k in ("d11", "d21"):
                out[k] = 0.0
                continue
            if k not in spec:
                ctx.fail("system", f"missing gain parameter {k}")
            out[k] = _as_number(ctx, f"system.{k}", spec[k], positive=k not in ("d11", "d21"), nonneg=True)
        return out
    raise AssertionError(kind)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source, line) from exc
    ctx = _Ctx(source, _line_index(node) if node is not None else {})
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping", source, 1)
    top = {"schema_version", "name", "kind", "description", "system", "epsilon", "epsilon_fraction", "constants",
           "disturbance", "initial", "integration", "grid", "verification"}
    _mapping(ctx, "", doc, top)
    if doc.get("schema_version") != SCENARIO_SCHEMA_VERSION:
        ctx.fail("schema_version", f"unsupported schema_version {doc.get('schema_version')!r}; expected {SCENARIO_SCHEMA_VERSION}")
    name = doc.get("name")
    if not isinstance(name, str) or not name.strip():
        ctx.fail("name", "name must be a nonempty string")
    kind = doc.get("kind")
    if kind not in KINDS:
        ctx.fail("kind", f"unknown kind {kind!r}; one of {', '.join(KINDS)}")
    eps_abs, eps_frac = _eps_list(ctx, doc)
    if eps_frac and kind not in ("general", "autonomous", "lti", "ofo"):
        ctx.fail("epsilon_fraction", f"kind {kind!r} needs explicit epsilon values")
    system = _system(ctx, kind, doc.get("system"))

    constants = doc.get("constants", "certified")
    if kind in ("general", "autonomous"):
        if isinstance(constants, str):
            if constants not in ("certified", "estimate"):
                ctx.fail("constants", "constants must be 'certified', 'estimate' or a mapping of values")
        else:
            from ..sysmodel import ConstantsTable

            cmap = _mapping(ctx, "constants", constants, set(ConstantsTable.field_names()))
            constants = {k: _as_number(ctx, f"constants.{k}", v, nonneg=True) for k, v in cmap.items()}
    elif "constants" in doc:
        ctx.fail("constants", f"kind {kind!r} derives its constants; remove this field")

    disturbance = {}
    if kind == "ofo":
        d = _mapping(ctx, "disturbance", doc.get("disturbance"), {"w_z"})
        dim = len(system["E"][0])
        disturbance = {"w_z": _signal(ctx, "disturbance.w_z", d.get("w_z"), dim)}
    elif "disturbance" in doc:
        ctx.fail("disturbance", f"kind {kind!r} takes no disturbance field (presets define their own)")

    initial = _mapping(ctx, "initial", doc.get("initial"), {"x", "z", "u", "x_r"})
    init = {}
    for k, v in initial.items():
        init[k] = _as_vector(ctx, f"initial.{k}", v)
    if kind == "lti":
        nx, nz = len(system["A"]), len(system["D"])
        for k, n in (("x", nx), ("z", nz), ("x_r", nx)):
            if k in init and len(init[k]) != n:
                ctx.fail(f"initial.{k}", f"expected {n} entries, got {len(init[k])}")
            if k in ("x", "z") and k not in init:
                ctx.fail("initial", f"missing initial.{k}")
    if kind == "ofo":
        nu, nz = len(system["B"][0]), len(system["A"])
        for k, n in (("u", nu), ("z", nz)):
            if k in init and len(init[k]) != n:
                ctx.fail(f"initial.{k}", f"expected {n} entries, got {len(init[k])}")

    integration = _integration(ctx, doc.get("integration"))
    grid = _mapping(ctx, "grid", doc.get("grid"), {"points"})
    if "points" in grid:
        p = grid["points"]
        if isinstance(p, bool) or not isinstance(p, int) or p < 2:
            ctx.fail("grid.points", "points must be an integer >= 2")
    verification = _mapping(ctx, "verification", doc.get("verification"), {"burn_in", "slack_percent", "validate_certificate"})
    ver = {}
    if "burn_in" in verification:
        ver["burn_in"] = _as_number(ctx, "verification.burn_in", verification["burn_in"], nonneg=True)
    if "slack_percent" in verification:
        ver["slack_percent"] = _as_number(ctx, "verification.slack_percent", verification["slack_percent"], nonneg=True)
    if "validate_certificate" in verification:
        ver["validate_certificate"] = bool(verification["validate_certificate"])
    desc = doc.get("description", "")
    if not isinstance(desc, str):
        ctx.fail("description", "description must be a string")
    return Scenario(
        name=name.strip(), kind=kind, system=system, epsilon=eps_abs, epsilon_fraction=eps_frac,
        constants=constants, disturbance=disturbance, initial=init, integration=integration,
        grid=dict(grid), verification=ver, description=desc, source=source,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror}", str(path)) from exc
    return parse_scenario(text, str(path))


# ---------------------------------------------------------------------------
# report format

UNITS = {
    "epsilon": "dimensionless (time-scale ratio)",
    "epsilon_fraction": "dimensionless (multiple of the admissible threshold)",
    "thresholds": "dimensionless (time-scale ratio)",
    "constants": "1/time for c_f, c_g; ratio of state norms (per unit time or per unit disturbance) for Lipschitz constants",
    "key_values.epsilon_star*": "dimensionless (time-scale ratio)",
    "key_values.*_bound*": "state norm",
    "key_values.contraction_rate": "1/time",
    "key_values.fitted_rate": "1/time",
    "worst_margin": "state norm",
    "worst_ratio": "dimensionless (measured / envelope)",
    "worst_time": "time",
    "slack_percent": "percent",
    "integrator.*_steps": "count",
    "integrator.rhs_evaluations": "count",
    "integrator.max_error_estimate": "dimensionless (scaled local error)",
    "integrator.step_cap": "time",
    "integrator.fast_rate": "1/time",
    "horizon": "time",
    "runtime_seconds": "seconds (wall clock)",
}

_num = {"type": ["number", "string", "null"]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "tool", "scenario", "units", "runs", "passed", "exit_code", "worst_margins", "notes"],
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "tool": {"type": "object", "required": ["name", "version"]},
        "scenario": {
            "type": "object",
            "required": ["name", "kind", "source", "seed", "slack_percent"],
            "properties": {"kind": {"enum": list(KINDS)}, "seed": {"type": "integer"}, "slack_percent": {"type": "number"}},
        },
        "units": {"type": "object", "additionalProperties": {"type": "string"}},
        "passed": {"type": "boolean"},
        "exit_code": {"enum": [0, 1, 2, 3]},
        "key_values": {"type": "object", "additionalProperties": _num},
        "worst_margins": {"type": "object", "additionalProperties": _num},
        "notes": {"type": "array", "items": {"type": "string"}},
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "epsilon", "thresholds", "key_values", "verifications", "case_tags", "notes"],
                "properties": {
                    "index": {"type": "integer"},
                    "epsilon": _num,
                    "thresholds": {"type": "object", "additionalProperties": _num},
                    "key_values": {"type": "object", "additionalProperties": _num},
                    "constants": {
                        "type": ["object", "null"],
                        "additionalProperties": {
                            "type": "object",
                            "required": ["value", "provenance"],
                            "properties": {"value": _num, "provenance": {"enum": ["supplied", "estimated"]}},
                        },
                    },
                    "verifications": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "passed", "gating"],
                            "properties": {
                                "name": {"type": "string"},
                                "passed": {"type": "boolean"},
                                "gating": {"type": "boolean"},
                                "worst_margin": _num,
                                "worst_ratio": _num,
                                "worst_time": _num,
                            },
                        },
                    },
                    "case_tags": {"type": "array", "items": {"type": "string"}},
                    "integrator": {"type": ["object", "null"]},
                    "artifacts": {"type": "object", "additionalProperties": {"type": "string"}},
                    "notes": {"type": "array", "items": {"type": "string"}},
                    "error": {"type": ["string", "null"]},
                },
            },
        },
    },
}


def validate_report(report: dict) -> None:
    """Raise ``ValidationError`` if ``report`` does not match the published schema."""
    import jsonschema

    try:
        jsonschema.validate(report, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(map(str, exc.absolute_path))
        raise ValidationError(f"report does not match schema at {loc or '<root>'}: {exc.message}") from exc
