"""Built-in nonlinear field presets and the shipped example scenarios."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Dict, List

from ..errors import ValidationError

__all__ = ["FIELD_PRESETS", "example_names", "example_path", "list_presets"]

FIELD_PRESETS: Dict[str, str] = {
    "perturbed-linear": "linear blocks plus beta sin(x) / beta P tanh(x) terms, sinusoidal and smooth-step "
    "disturbances; constants certified in closed form (system.seed selects the member)",
    "scalar-nonlinear": "x' = -1.5 x + z + 0.1 sin(x), eps z' = -z + 0.5 x + 0.2 tanh(x) + w_z",
}


def _examples_dir():
    return resources.files("twoscale.scenarios").joinpath("examples")


def example_names() -> List[str]:
    return sorted(p.name[: -len(".yaml")] for p in _examples_dir().iterdir() if p.name.endswith(".yaml"))


def example_path(name: str) -> Path:
    if name not in example_names():
        raise ValidationError(f"no example scenario named {name!r}")
    return Path(str(_examples_dir().joinpath(name + ".yaml")))


def list_presets() -> str:
    """Stable text listing of field presets and example scenarios."""
    lines = ["field presets:"]
    for name in sorted(FIELD_PRESETS):
        lines.append(f"  {name:<22} {FIELD_PRESETS[name]}")
    lines.append("example scenarios:")
    from .schema import load_scenario

    for name in example_names():
        sc = load_scenario(example_path(name))
        lines.append(f"  {name:<22} [{sc.kind}] {sc.description.strip()}")
    return "\n".join(lines) + "\n"
