"""Command-line interface.

Exit codes: 0 solved or feasible, 2 infeasible (certificate written),
3 bad input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import certify
from .builder import InfeasibleScenario, LrModel, ObjectiveScenario, solve_lexicographic, solve_scenario
from .lp import DEFAULT_TOLERANCES, FarkasError, NumericalFailure, Tolerances
from .model import ExperimentSpec, SpecError, TalliedFrequencies, decode_category, enumerate_settings
from .presets import PRESETS, get_preset
from .quantum import fixture_from_dict, joint_probabilities
from .tables import TABLES, reproduce

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

TOLERANCE_ENV = "DETLOOPHOLE_TOLERANCES"
TOLERANCE_PROFILES = {
    "default": DEFAULT_TOLERANCES,
    "strict": Tolerances(feasibility=1e-9, optimality=1e-10, pivot=1e-11),
    "loose": Tolerances(feasibility=1e-7, optimality=1e-8, pivot=1e-9),
}


class InputError(Exception):
    pass


def fmt(value: float) -> str:
    return f"{value:.6f}"


# --- argument handling ---------------------------------------------------------


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _tolerances(args) -> Tolerances:
    profile = os.environ.get(TOLERANCE_ENV, "default")
    if profile not in TOLERANCE_PROFILES:
        raise InputError(f"{TOLERANCE_ENV}={profile!r} is not one of {', '.join(TOLERANCE_PROFILES)}")
    tol = TOLERANCE_PROFILES[profile]
    if getattr(args, "tol_feas", None) is not None:
        if not 0 < args.tol_feas < 1e-3:
            raise InputError("--tol-feas must lie in (0, 1e-3)")
        tol = dataclasses.replace(tol, feasibility=args.tol_feas)
    return tol


def _load_problem(args) -> tuple[ExperimentSpec, TalliedFrequencies]:
    if args.preset:
        if args.spec or args.freq:
            raise InputError("--preset cannot be combined with --spec/--freq")
        return get_preset(args.preset).load()
    if not (args.spec and args.freq):
        raise InputError("give --preset, or both --spec and --freq")
    spec = ExperimentSpec.from_dict(_read_json(args.spec))
    return spec, TalliedFrequencies.from_dict(_read_json(args.freq), spec)


def _parse_fix(items: list[str]) -> dict[str, float]:
    fixed = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise InputError(f"--fix expects OBSERVER=VALUE, got {item!r}")
        if name in fixed:
            raise InputError(f"--fix names {name!r} twice")
        try:
            fixed[name] = float(value)
        except ValueError:
            raise InputError(f"--fix {item!r}: {value!r} is not a number") from None
    return fixed


def _scenario(args, spec: ExperimentSpec) -> ObjectiveScenario:
    fixed = _parse_fix(args.fix)
    objective = args.objective
    if objective == "dsym":
        scenario = ObjectiveScenario.dsym([o for o in spec.observers if o not in fixed], fixed)
    elif objective.startswith("dmin:"):
        scenario = ObjectiveScenario.dmin(objective[5:], fixed)
    else:
        raise InputError(f"--objective must be 'dsym' or 'dmin:<observer>', got {objective!r}")
    scenario.check(spec)
    return scenario


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


# --- reports -------------------------------------------------------------------


def model_to_dict(model: LrModel, spec: ExperimentSpec, support_tol: float = 1e-12) -> dict:
    support = [
        {"category": spec.category_label(decode_category(spec, int(c))), "weight": float(model.x[c])}
        for c in np.flatnonzero(model.x > support_tol)
    ]
    return {
        "dsym": float(model.dsym),
        "dmin": {o: float(v) for o, v in zip(spec.observers, model.dmin)},
        "pdet": {f"{spec.observers[i]}:{spec.measurements[i][k]}": float(model.pdet[spec.slot(i, k)])
                 for i, k in spec.slots()},
        "tally": {spec.setting_label(s): float(v) for s, v in zip(enumerate_settings(spec), model.v)},
        "support": support,
    }


def _model_table(model: LrModel, spec: ExperimentSpec) -> list[str]:
    lines = ["  detection probabilities:"]
    for i, k in spec.slots():
        name = f"{spec.observers[i]}:{spec.measurements[i][k]}"
        lines.append(f"    {name:<16} {fmt(model.pdet[spec.slot(i, k)])}")
    lines.append("  tally probabilities:")
    for s, v in zip(enumerate_settings(spec), model.v):
        lines.append(f"    {spec.setting_label(s):<16} {fmt(v)}")
    return lines


def _result_dict(res, spec) -> dict:
    return {
        "scenario": res.scenario.describe(),
        "status": "optimal",
        "value": float(res.value),
        "iterations": res.solution.iterations,
        "degenerate_settings": res.degenerate_settings,
        "model": model_to_dict(res.model, spec),
    }


def _result_table(res, spec) -> list[str]:
    lines = [f"{res.scenario.describe()}: {fmt(res.value)}  (optimal)"]
    lines += _model_table(res.model, spec)
    if res.degenerate_settings:
        lines.append("  degenerate settings (tally probability below 1e-9): " + ", ".join(res.degenerate_settings))
    return lines


def _certificate_outcome(spec, q, scenario, pin, args, tol) -> int:
    outcome = certify.pinned_feasible(spec, q, scenario, pin, tol)
    if outcome.feasible:
        doc = {"feasible": True, "scenario": scenario.describe(), "pin": pin,
               "model": model_to_dict(outcome.witness, spec)}
        if args.format == "json":
            _write(_dumps(doc), args.out)
        else:
            if args.out:
                Path(args.out).write_text(_dumps(doc))
            print(f"{scenario.describe()} pinned at {fmt(pin)}: feasible (local-realist model exists)")
            print("\n".join(_model_table(outcome.witness, spec)))
        return EXIT_OK
    check = certify.verify_certificate(outcome.certificate, spec, q, scenario, jobs=args.jobs)
    if not check:
        raise NumericalFailure(f"extracted certificate failed verification: {check.violation}")
    doc = certify.certificate_to_dict(outcome.certificate, spec, q, scenario, check)
    if args.format == "json":
        _write(_dumps(doc), args.out)
    else:
        if args.out:
            Path(args.out).write_text(_dumps(doc))
        print(f"{scenario.describe()} pinned at {fmt(pin)}: infeasible")
        print(f"  certificate verified over {check.checked} categories (coverage {check.coverage:.6f}), "
              f"margin {check.margin:.6e}")
    return EXIT_INFEASIBLE


# --- commands ------------------------------------------------------------------


def cmd_generate(args) -> int:
    if bool(args.preset) == bool(args.fixture):
        raise InputError("give exactly one of --preset or --fixture")
    if args.fixture:
        fix = fixture_from_dict(_read_json(args.fixture))
        spec, q = fix.experiment(), joint_probabilities(fix)
    else:
        spec, q = get_preset(args.preset).load()
    if args.spec_out:
        Path(args.spec_out).write_text(_dumps(spec.to_dict()))
    _write(_dumps(q.to_dict(spec)), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    tol = _tolerances(args)
    spec, q = _load_problem(args)
    if args.lex:
        if args.fix or args.objective != "dsym":
            raise InputError("--lex cannot be combined with --objective or --fix")
        order = [o.strip() for o in args.lex.split(",")]
        for o in order:
            spec.observer_index(o)
        results = solve_lexicographic(spec, q, order, tol)
    else:
        results = [solve_scenario(spec, q, _scenario(args, spec), tol)]
    if args.format == "json":
        _write(_dumps({"results": [_result_dict(r, spec) for r in results]}), args.out)
    else:
        lines = []
        for r in results:
            lines += _result_table(r, spec)
        _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    tol = _tolerances(args)
    spec, q = _load_problem(args)
    if args.pin is None or not 0.0 < args.pin <= 1.0:
        raise InputError("--pin must lie in (0, 1]")
    return _certificate_outcome(spec, q, _scenario(args, spec), args.pin, args, tol)


def cmd_verify(args) -> int:
    cert, spec, q, scenario = certify.certificate_from_dict(_read_json(args.cert))
    check = certify.verify_certificate(cert, spec, q, scenario, jobs=args.jobs)
    print(f"{'verified' if check else 'REJECTED'}: {scenario.describe()} pinned at {fmt(cert.pin)}")
    print(f"  margin {check.margin:.6e}, largest column {check.max_column:.3e}, coverage {check.coverage:.6f}")
    if not check:
        print(f"  {check.violation}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_reproduce(args) -> int:
    tol = _tolerances(args)
    result = reproduce(args.table, candidates=not args.no_candidates, jobs=args.jobs, tol=tol)
    table = result.table
    if args.format == "json":
        doc = {
            "table": table.table_id,
            "title": table.title,
            "rows": [r.describe() for r in table.rows],
            "cells": [
                {"column": c.column, "row": c.row, "reported": c.reported, "computed": c.computed,
                 "deviation": c.deviation, "matches": c.matches,
                 **({"note": result.unavailable[c.column]} if c.column in result.unavailable else {})}
                for c in result.cells
            ],
        }
        _write(_dumps(doc), args.out)
        return EXIT_OK
    width = max(len(r.describe()) for r in table.rows)
    lines = [f"Table {table.table_id}: {table.title}", ""]
    for col in table.columns:
        lines.append(f"[{col}]" + (f"  {result.unavailable[col]}" if col in result.unavailable else ""))
        if col in result.unavailable:
            continue
        lines.append(f"  {'objective':<{width}}  reported  computed   deviation  ok")
        for r, scenario in enumerate(table.rows):
            c = result.cell(col, r)
            lines.append(
                f"  {scenario.describe():<{width}}  {c.reported:<8.4f}  {fmt(c.computed)}  {c.deviation:+.2e}  "
                f"{'yes' if c.matches else 'NO'}"
            )
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _problem_args(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--spec", help="experiment JSON file")
    p.add_argument("--freq", help="tallied frequencies JSON file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment instead of files")
    if scenario:
        p.add_argument("--objective", default="dsym", help="dsym or dmin:<observer> (default dsym)")
        p.add_argument("--fix", action="append", default=[], metavar="OBS=VALUE",
                       help="hold an observer's efficiency floor at VALUE (repeatable)")
    p.add_argument("--tol-feas", type=float, help="primal feasibility tolerance")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--out", help="write output to this file")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")


class _Parser(argparse.ArgumentParser):
    # usage errors share the bad-input exit code instead of argparse's 2
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="detloophole",
        description="Critical detection efficiencies below which local-realist models reproduce tallied data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write tallied frequencies for a quantum fixture")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--fixture", help="fixture JSON file")
    p.add_argument("--out", help="frequency file (default stdout)")
    p.add_argument("--spec-out", help="also write the experiment JSON here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="maximize a detection efficiency")
    _problem_args(p)
    p.add_argument("--lex", metavar="OBS,OBS,...", help="maximize observers one after another")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="decide a pinned efficiency; emit a witness or a certificate")
    _problem_args(p)
    p.add_argument("--pin", type=float, help="efficiency required of the maximized observers")
    _common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="re-check a certificate file from scratch")
    p.add_argument("cert")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce", help="recompute a reference table")
    p.add_argument("table", type=int, choices=sorted(TABLES))
    p.add_argument("--no-candidates", action="store_true", help="skip fixtures with reconstructed parameters")
    p.add_argument("--tol-feas", type=float)
    _common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InfeasibleScenario as exc:
        return _infeasible(exc, args)
    except (InputError, SpecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, FarkasError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _infeasible(exc: InfeasibleScenario, args) -> int:
    # No model exists at all; the pinned system at zero efficiency carries the certificate.
    built = exc.built
    try:
        print(f"infeasible: {exc}", file=sys.stderr)
        return _certificate_outcome(built.spec, built.q, built.scenario, 0.0, args, _tolerances(args))
    except (NumericalFailure, FarkasError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
