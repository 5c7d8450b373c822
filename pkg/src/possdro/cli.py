"""Command-line interface.

    possdro reformulate IN -o OUT
    possdro solve IN [--tol T] [--engine reference|backend] [--backend NAME] [--json]
    possdro eval IN --x v1,v2,... [--json]
    possdro sweep IN --param gamma|rho|ell --grid a:b:step -o OUT.csv
    possdro example drex|portfolio [-o OUT]

Exit codes: 0 success, 2 usage, 3 document error, 4 solver failure,
5 certification failure, 6 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io as _io
import json
import math
import sys
from importlib import resources
from typing import Optional, Sequence

import numpy as np
import yaml

from .errors import CertificationError, ModelError, SolverError
from .io import DocumentError, build_problem, parse, program_to_json
from .model import Evaluation, deterministic_counterpart, evaluate_solution, lift_all, solve_backend, solve_reference
from .solvers.lp import Status

EXIT_OK, EXIT_USAGE, EXIT_DOCUMENT, EXIT_SOLVER, EXIT_CERT, EXIT_IO = 0, 2, 3, 4, 5, 6
EXAMPLES = ("drex", "portfolio")
SWEEP_PARAMS = ("gamma", "rho", "ell")


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def example_text(name: str) -> str:
    if name not in EXAMPLES:
        raise CommandError(EXIT_USAGE, f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    return resources.files("possdro").joinpath("data", f"{name}.yaml").read_text(encoding="utf-8")


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from exc


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else "nan" if math.isnan(v) else f"{v:.10g}"


def _vec(v) -> str:
    return "(" + ", ".join(f"{c:.6g}" for c in v) + ")"


# reports ----------------------------------------------------------------

def evaluation_dict(P, ev: Evaluation) -> dict:
    dist = lambda d: [{"scenario": [float(c) for c in s], "mass": float(m)} for s, m in d]
    return {
        "x": {nm: float(v) for nm, v in zip(P.names, ev.x)},
        "objective": {"value": ev.objective, "upper": ev.objective_upper,
                      "distribution": dist(ev.objective_distribution)},
        "uncertain_rows": [{"name": r.name, "kind": r.kind, "worst_expectation": r.value, "upper": r.upper,
                            "rhs": r.rhs, "slack": r.slack, "feasible": r.feasible(),
                            "distribution": dist(r.distribution)} for r in ev.rows],
        "certain_rows": [{"name": row.name, "slack": s} for row, (s, _) in zip(P.rows, ev.certain_slacks)],
        "feasible": ev.feasible(),
    }


def evaluation_text(P, ev: Evaluation) -> str:
    out = [f"x = {_vec(ev.x)}"]
    if P.objective_uncertain:
        out.append(f"objective worst expectation {_fmt(ev.objective)} (certified upper {_fmt(ev.objective_upper)})")
        for s, m in ev.objective_distribution:
            out.append(f"  scenario {_vec(s)}  mass {m:.6g}")
    else:
        out.append(f"objective {_fmt(ev.objective)}")
    for r in ev.rows:
        verdict = "ok" if r.feasible() else "VIOLATED"
        out.append(f"row {r.name} [{r.kind}]: worst expectation {_fmt(r.value)} (upper {_fmt(r.upper)}) "
                   f"<= {_fmt(r.rhs)}  slack {_fmt(r.slack)}  {verdict}")
        for s, m in r.distribution:
            out.append(f"  scenario {_vec(s)}  mass {m:.6g}")
    for row, (s, _) in zip(P.rows, ev.certain_slacks):
        out.append(f"row {row.name}: slack {_fmt(s)}")
    return "\n".join(out)


def _solve(P, tol: float, engine: str, backend: Optional[str]):
    try:
        if engine == "reference":
            sol = solve_reference(P, tol=tol)
        else:
            sol = solve_backend(P, tol=min(tol, 1e-7), backend=backend)
    except CertificationError as exc:
        raise CommandError(EXIT_CERT, f"certification failed: {exc} (bounds {exc.lower}, {exc.upper})") from exc
    except SolverError as exc:
        raise CommandError(EXIT_SOLVER, f"solver failed: {exc}") from exc
    if sol.status is Status.NO_BACKEND:
        raise CommandError(EXIT_SOLVER, "no conic backend available; pass --backend cvxpy or "
                           "set POSSDRO_CONIC_BACKEND")
    if sol.status is not Status.OPTIMAL:
        raise CommandError(EXIT_SOLVER, f"solver status: {sol.status.value}"
                           + (f" ({sol.message})" if sol.message else ""))
    return sol


# commands ---------------------------------------------------------------

def cmd_reformulate(args) -> int:
    P = parse(_read(args.input))
    L = lift_all(P)
    D = deterministic_counterpart(L)
    text = program_to_json(D)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        _write(args.output, text)
    for note in L.lifts:
        print(f"lift: {note}", file=sys.stderr)
    print(f"{D.num_vars} variables, {len(D.b)} rows, {len(D.cones)} cone blocks", file=sys.stderr)
    return EXIT_OK


def cmd_solve(args) -> int:
    P = parse(_read(args.input))
    sol = _solve(P, args.tol, args.engine, args.backend)
    if args.json:
        rep = {"status": sol.status.value, "engine": sol.engine, "value": sol.value, "lower": sol.lower,
               "upper": sol.upper, "gap": sol.gap, "iterations": sol.iterations}
        rep["evaluation"] = evaluation_dict(P, sol.evaluation)
        print(json.dumps(rep, indent=2))
    else:
        print(f"status {sol.status.value} ({sol.engine} engine, {sol.iterations} iterations)")
        print(f"optimal value {_fmt(sol.value)}  bounds [{_fmt(sol.lower)}, {_fmt(sol.upper)}]  gap {_fmt(sol.gap)}")
        print(evaluation_text(P, sol.evaluation))
    return EXIT_OK


def _parse_x(text: str, n: int) -> np.ndarray:
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise CommandError(EXIT_USAGE, f"--x must be comma-separated numbers: {exc}") from exc
    if len(x) != n:
        raise CommandError(EXIT_USAGE, f"--x has {len(x)} values but the problem has {n} variables")
    return x


def cmd_eval(args) -> int:
    P = parse(_read(args.input))
    x = _parse_x(args.x, P.num_vars)
    try:
        ev = evaluate_solution(P, x, tol=args.tol)
    except CertificationError as exc:
        raise CommandError(EXIT_CERT, f"certification failed: {exc}") from exc
    if args.json:
        print(json.dumps(evaluation_dict(P, ev), indent=2))
    else:
        print(evaluation_text(P, ev))
    return EXIT_OK


def parse_grid(text: str, param: str) -> list:
    """'a:b:step' with inclusive end, or a comma-separated list."""
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError("need step > 0 and end >= start")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            values = [round(a + k * step, 12) for k in range(count)]
        else:
            values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise CommandError(EXIT_USAGE, f"invalid grid {text!r}: {exc}") from exc
    if not values:
        raise CommandError(EXIT_USAGE, "grid is empty")
    for v in values:
        ok = {"gamma": v >= 0, "rho": 0 < v < 1, "ell": v >= 1 and float(v).is_integer()}[param]
        if not ok:
            raise CommandError(EXIT_USAGE, f"grid value {v:g} is outside the legal range of {param}")
    return [int(v) for v in values] if param == "ell" else values


def _interval_specs(doc: dict) -> list:
    specs = []
    obj = doc.get("objective") or {}
    if isinstance(obj, dict) and isinstance(obj.get("uncertain"), dict):
        specs.append(obj["uncertain"])
    for c in doc.get("constraints") or []:
        if isinstance(c, dict) and isinstance(c.get("uncertain"), dict):
            specs.append(c["uncertain"])
    return [s for s in specs if s.get("type") == "interval"]


def run_sweep(doc: dict, param: str, grid: Sequence, tol: float = 1e-5) -> tuple:
    """Solve the document once per grid value; returns (header, rows)."""
    if not _interval_specs(doc):
        raise CommandError(EXIT_DOCUMENT, "sweeps need at least one interval model in the document")
    P0 = build_problem(doc)
    header = [param, "value", "lower", "upper", "status"] + list(P0.names)
    rows = []
    for v in grid:
        d = copy.deepcopy(doc)
        for spec in _interval_specs(d):
            spec[param] = v
        P = build_problem(d)
        sol = _solve(P, tol, "reference", None)
        rows.append([v, sol.value, sol.lower, sol.upper, sol.status.value] + list(sol.x))
    return header, rows


def sweep_csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else (str(c) if isinstance(c, int) else _fmt(c)) for c in r])
    return buf.getvalue()


def cmd_sweep(args) -> int:
    text = _read(args.input)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DocumentError("document", f"malformed document: {exc}") from exc
    build_problem(doc)
    grid = parse_grid(args.grid, args.param)
    header, rows = run_sweep(doc, args.param, grid, args.tol)
    out = sweep_csv(header, rows)
    if args.output == "-":
        sys.stdout.write(out)
    else:
        _write(args.output, out)
        print(f"{len(rows)} rows written to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_example(args) -> int:
    text = example_text(args.name)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _write(args.output, text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CommandError(EXIT_USAGE, message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="possdro", description="Distributionally robust LPs with possibilistic ambiguity sets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("reformulate", help="write the deterministic counterpart as JSON")
    r.add_argument("input")
    r.add_argument("-o", "--output", required=True, help="output path, '-' for stdout")
    r.set_defaults(func=cmd_reformulate)

    s = sub.add_parser("solve", help="solve a problem document")
    s.add_argument("input")
    s.add_argument("--tol", type=float, default=1e-5, help="relative optimality tolerance (default 1e-5)")
    s.add_argument("--engine", choices=("reference", "backend"), default="reference")
    s.add_argument("--backend", default=None, help="conic backend name or module:function")
    s.add_argument("--json", action="store_true", help="machine-readable report")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="evaluate worst expectations at a given x")
    e.add_argument("input")
    e.add_argument("--x", required=True, help="comma-separated values, one per variable")
    e.add_argument("--tol", type=float, default=1e-6)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="solve over a grid of gamma, rho or ell values")
    w.add_argument("input")
    w.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    w.add_argument("--grid", required=True, help="start:stop:step (inclusive) or v1,v2,...")
    w.add_argument("-o", "--output", required=True, help="CSV path, '-' for stdout")
    w.add_argument("--tol", type=float, default=1e-5)
    w.set_defaults(func=cmd_sweep)

    x = sub.add_parser("example", help="print a shipped example document")
    x.add_argument("name", choices=EXAMPLES)
    x.add_argument("-o", "--output", default=None)
    x.set_defaults(func=cmd_example)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DocumentError as exc:
        print(f"document error: {exc}", file=sys.stderr)
        return EXIT_DOCUMENT
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ModelError as exc:
        print(f"document error: {exc}", file=sys.stderr)
        return EXIT_DOCUMENT


if __name__ == "__main__":
    sys.exit(main())
