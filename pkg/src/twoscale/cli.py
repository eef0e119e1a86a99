"""Command line entry point: ``twoscale run | list-presets | selfcheck``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .errors import NumericalError, ValidationError

OUT_ENV = "TWOSCALE_OUT"
log = logging.getLogger("twoscale")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twoscale", description="Simulate two-time-scale systems and check error bounds.")
    p.add_argument("--version", action="version", version=f"twoscale {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file (or the name of a shipped example)")
    r.add_argument("scenario", help="path to a YAML scenario, or an example name from list-presets")
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<name>, else ./twoscale-out/<name>)")
    r.add_argument("--slack", type=float, default=None, metavar="PCT", help="relative slack on envelopes in percent (default 1)")
    r.add_argument("--seed", type=int, default=0, help="seed for sampled estimates and certificate validation")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for scenarios with several eps values")
    r.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    sub.add_parser("list-presets", help="list field presets and shipped example scenarios")
    s = sub.add_parser("selfcheck", help="run the built-in invariant checks")
    s.add_argument("--seed", type=int, default=0)
    return p


def _resolve(arg: str) -> Path:
    from .scenarios import example_names, example_path

    path = Path(arg)
    if path.exists() or arg not in example_names():
        return path
    return example_path(arg)


def _cmd_run(args) -> int:
    from .scenarios import load_scenario, run_scenario

    try:
        sc = load_scenario(_resolve(args.scenario))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "twoscale-out")) / sc.name
    try:
        outcome = run_scenario(sc, out, args.slack, args.seed, args.jobs, figures=not args.no_figures)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    rep = outcome.report
    for run in rep["runs"]:
        eps = run.get("epsilon")
        head = f"run {run['index']}" + (f" eps={eps:.6g}" if isinstance(eps, float) else "")
        if run.get("error"):
            print(f"{head}: {run['error']}")
            continue
        for v in run["verifications"]:
            flag = "PASS" if v["passed"] else "FAIL"
            gate = "" if v["gating"] else " (informative)"
            ratio = v.get("worst_ratio")
            extra = f" worst ratio {ratio:.4g}" if isinstance(ratio, float) else ""
            print(f"{head}: {flag} {v['name']}{extra}{gate}")
    print(f"report: {out / 'report.json'} (exit {rep['exit_code']})")
    return rep["exit_code"]


def _cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list-presets":
        from .scenarios import list_presets

        sys.stdout.write(list_presets())
        return 0
    if args.command == "selfcheck":
        return _cmd_selfcheck(args)
    return _cmd_run(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
