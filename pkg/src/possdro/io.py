"""Problem documents (YAML) and program output (JSON).

Document layout::

    variables:                      # list, order defines the x vector
      - {name: x1, lower: 0, upper: 1}
    objective:                      # either certain coefficients ...
      certain: {x1: 1.0}
    # ... or an uncertain block (optionally with 'certain' as well)
    objective:
      uncertain: <model>
    constraints:
      - name: cap
        coefficients: {x1: 1, x2: 1}
        relation: "<="
        rhs: 1
      - name: risky
        uncertain: <model>
        certain: {x3: -1}           # optional certain part of the row
        rhs: 0                      # or the string "uncertain"

A <model> is one of::

    {type: discrete, columns: [x1, x2], scenarios: [[...], ...], degrees: [...]}
    {type: interval, columns: [x1, x2], nominal: [...],
     lower_spread: [...], upper_spread: [...], z1: 1, z2: [1, 0.32],
     matrix: [[...], ...], gamma: 6, z: 1, ell: 2, rho: identity}

For interval models, 'covariance' plus 'spread_sigmas' may replace the
spreads and matrix: B = covariance^(1/2), spreads = spread_sigmas * sigma_j.
'negate: true' turns a model of a into a model of -a (losses from returns).
Columns are variable names or 1-based variable positions.  With
rhs: uncertain, the model carries one extra trailing coordinate for b.
"""

from __future__ import annotations

import json
import math
import warnings
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ModelError
from .interval import LevelGrid
from .model import (DeterministicProgram, LinearRow, UncertainLP, UncertainObjective, UncertainRow)
from .possibility import (BudgetInterval, DiscretePossibility, Distortion, FuzzyInterval,
                          JointPossibilityModel)
from .solvers.lp import EQ, GE, LE

PROGRAM_FORMAT = "possdro-program/1"
_RELATIONS = {"<=": LE, ">=": GE, "==": EQ, "=": EQ}


class DocumentError(ModelError):
    """Schema or invariant violation, tagged with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _num(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        if isinstance(v, str):
            try:
                v = float(v)
            except ValueError:
                raise DocumentError(path, f"expected a number, got {v!r}") from None
        else:
            raise DocumentError(path, f"expected a number, got {v!r}")
    v = float(v)
    if math.isnan(v):
        raise DocumentError(path, "NaN is not allowed")
    return v


def _finite(v, path) -> float:
    v = _num(v, path)
    if not math.isfinite(v):
        raise DocumentError(path, "value must be finite")
    return v


def _vector(v, path, n: Optional[int] = None, broadcast=True) -> np.ndarray:
    if isinstance(v, (int, float)) and not isinstance(v, bool) and broadcast and n is not None:
        return np.full(n, _finite(v, path))
    if not isinstance(v, list):
        raise DocumentError(path, "expected a list of numbers")
    out = np.array([_finite(x, f"{path}[{i + 1}]") for i, x in enumerate(v)])
    if n is not None and len(out) != n:
        raise DocumentError(path, f"expected {n} entries, got {len(out)}")
    return out


def _matrix(v, path, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise DocumentError(path, "expected a nonempty list of rows")
    out = np.array([_vector(r, f"{path}[{i + 1}]", cols, broadcast=False) for i, r in enumerate(v)])
    if out.ndim != 2 or len({len(r) for r in v}) != 1:
        raise DocumentError(path, "rows must all have the same length")
    if rows is not None and out.shape[0] != rows:
        raise DocumentError(path, f"expected {rows} rows, got {out.shape[0]}")
    return out


def _mapping(v, path) -> dict:
    if not isinstance(v, dict):
        raise DocumentError(path, "expected a mapping")
    return v


def _keys(d: dict, path: str, allowed, required=()):
    for k in d:
        if k not in allowed:
            raise DocumentError(f"{path}.{k}" if path else str(k), "unknown field")
    for k in required:
        if k not in d:
            raise DocumentError(f"{path}.{k}" if path else k, "required field is missing")


def _column(ref, names, path) -> int:
    if isinstance(ref, bool):
        raise DocumentError(path, f"invalid column reference {ref!r}")
    if isinstance(ref, int):
        if not 1 <= ref <= len(names):
            raise DocumentError(path, f"variable position {ref} out of range 1..{len(names)}")
        return ref - 1
    if isinstance(ref, str) and ref in names:
        return names.index(ref)
    raise DocumentError(path, f"unknown variable {ref!r}")


def _coefficients(v, names, path) -> np.ndarray:
    out = np.zeros(len(names))
    if isinstance(v, list):
        return _vector(v, path, len(names), broadcast=False)
    for k, c in _mapping(v, path).items():
        out[_column(k, names, f"{path}.{k}")] = _finite(c, f"{path}.{k}")
    return out


def _sqrt_psd(S: np.ndarray, path: str) -> np.ndarray:
    if not np.allclose(S, S.T, rtol=0, atol=1e-12):
        # an upper triangle alone is mirrored
        if np.allclose(np.tril(S, -1), 0):
            S = np.triu(S) + np.triu(S, 1).T
        else:
            raise DocumentError(path, "covariance matrix must be symmetric or upper triangular")
    w, U = np.linalg.eigh(S)
    if np.any(w < 0):
        warnings.warn(f"{path}: clamping {int((w < 0).sum())} negative eigenvalue(s) to 0", stacklevel=3)
        w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ U.T, S


def _model(spec, names, path, extra: int = 0):
    """Returns (model, columns, grid)."""
    spec = _mapping(spec, path)
    kind = spec.get("type")
    if kind not in ("discrete", "interval"):
        raise DocumentError(f"{path}.type", "must be 'discrete' or 'interval'")
    if "columns" not in spec:
        raise DocumentError(f"{path}.columns", "required field is missing")
    cols_raw = spec["columns"]
    if not isinstance(cols_raw, list) or not cols_raw:
        raise DocumentError(f"{path}.columns", "expected a nonempty list")
    cols = tuple(_column(c, names, f"{path}.columns[{i + 1}]") for i, c in enumerate(cols_raw))
    if len(set(cols)) != len(cols):
        raise DocumentError(f"{path}.columns", "columns must be distinct")
    dim = len(cols) + extra
    negate = spec.get("negate", False)
    if not isinstance(negate, bool):
        raise DocumentError(f"{path}.negate", "expected true or false")
    if kind == "discrete":
        _keys(spec, path, ("type", "columns", "scenarios", "degrees", "negate"), ("scenarios", "degrees"))
        S = _matrix(spec["scenarios"], f"{path}.scenarios", cols=dim)
        d = _vector(spec["degrees"], f"{path}.degrees", S.shape[0], broadcast=False)
        if np.any(d < 0) or np.any(d > 1):
            raise DocumentError(f"{path}.degrees", "possibility degrees must lie in [0, 1]")
        if abs(d.max() - 1.0) > 1e-12:
            raise DocumentError(f"{path}.degrees", "possibility distribution must be normal (some degree equal to 1)")
        if negate:
            S = -S
        return DiscretePossibility(S, d), cols, None

    allowed = ("type", "columns", "nominal", "lower_spread", "upper_spread", "z1", "z2", "matrix",
               "covariance", "spread_sigmas", "gamma", "z", "ell", "rho", "negate")
    _keys(spec, path, allowed, ("nominal", "gamma", "ell"))
    nom = _vector(spec["nominal"], f"{path}.nominal", dim, broadcast=False)
    if "covariance" in spec:
        if "matrix" in spec:
            raise DocumentError(f"{path}.matrix", "give either matrix or covariance, not both")
        Sraw = _matrix(spec["covariance"], f"{path}.covariance", dim, dim)
        B, S = _sqrt_psd(Sraw, f"{path}.covariance")
        sig = np.sqrt(np.clip(np.diag(S), 0.0, None))
        k = _finite(spec.get("spread_sigmas", 6.0), f"{path}.spread_sigmas")
        if k <= 0:
            raise DocumentError(f"{path}.spread_sigmas", "must be positive")
        lo_s = hi_s = k * sig
        for key in ("lower_spread", "upper_spread"):
            if key in spec:
                raise DocumentError(f"{path}.{key}", "spreads come from spread_sigmas when covariance is given")
    else:
        if "matrix" not in spec:
            raise DocumentError(f"{path}.matrix", "required field is missing (or give covariance)")
        if "spread_sigmas" in spec:
            raise DocumentError(f"{path}.spread_sigmas", "only valid together with covariance")
        B = _matrix(spec["matrix"], f"{path}.matrix", dim, dim)
        for key in ("lower_spread", "upper_spread"):
            if key not in spec:
                raise DocumentError(f"{path}.{key}", "required field is missing")
        lo_s = _vector(spec["lower_spread"], f"{path}.lower_spread", dim)
        hi_s = _vector(spec["upper_spread"], f"{path}.upper_spread", dim)
    z1 = _vector(spec.get("z1", 1.0), f"{path}.z1", dim)
    z2 = _vector(spec.get("z2", 1.0), f"{path}.z2", dim)
    comps = []
    for j in range(dim):
        for key, val in (("z1", z1[j]), ("z2", z2[j])):
            if val <= 0:
                raise DocumentError(f"{path}.{key}[{j + 1}]", "shape exponent must be positive")
        for key, val in (("lower_spread", lo_s[j]), ("upper_spread", hi_s[j])):
            if val < 0:
                raise DocumentError(f"{path}.{key}[{j + 1}]", "spread must be nonnegative")
        if (lo_s[j] == 0) != (hi_s[j] == 0):
            raise DocumentError(f"{path}.lower_spread[{j + 1}]",
                                "spreads must be both positive or both zero (crisp coefficient)")
        comps.append(FuzzyInterval(nom[j], lo_s[j], hi_s[j], z1[j], z2[j]))
    gamma = _finite(spec["gamma"], f"{path}.gamma")
    if gamma < 0:
        raise DocumentError(f"{path}.gamma", "budget must be nonnegative")
    z = _finite(spec.get("z", 1.0), f"{path}.z")
    if z <= 0:
        raise DocumentError(f"{path}.z", "shape exponent must be positive")
    ell = spec["ell"]
    if isinstance(ell, bool) or not isinstance(ell, int) or ell < 1:
        raise DocumentError(f"{path}.ell", "must be a positive integer")
    rho = spec.get("rho", "identity")
    if rho in ("identity", None):
        dist = Distortion()
    else:
        r = _finite(rho, f"{path}.rho")
        if not 0 < r < 1:
            raise DocumentError(f"{path}.rho", "must lie in (0, 1) or be 'identity'")
        dist = Distortion(r)
    J = JointPossibilityModel(comps, B, BudgetInterval(gamma, z))
    if negate:
        J = J.negated()
    return J, cols, LevelGrid(ell, dist)


def build_problem(doc: Any) -> UncertainLP:
    """Validate a parsed document and build the (unlifted) model."""
    doc = _mapping(doc, "")
    _keys(doc, "", ("name", "variables", "objective", "constraints"), ("variables", "objective"))
    vars_raw = doc["variables"]
    if not isinstance(vars_raw, list) or not vars_raw:
        raise DocumentError("variables", "expected a nonempty list")
    names, lower, upper = [], [], []
    for i, v in enumerate(vars_raw):
        p = f"variables[{i + 1}]"
        v = {"name": v} if isinstance(v, str) else _mapping(v, p)
        _keys(v, p, ("name", "lower", "upper"), ("name",))
        if not isinstance(v["name"], str) or not v["name"]:
            raise DocumentError(f"{p}.name", "expected a nonempty string")
        if v["name"] in names:
            raise DocumentError(f"{p}.name", f"duplicate variable {v['name']!r}")
        names.append(v["name"])
        lo = -math.inf if v.get("lower") is None else _num(v["lower"], f"{p}.lower")
        hi = math.inf if v.get("upper") is None else _num(v["upper"], f"{p}.upper")
        if lo > hi:
            raise DocumentError(p, "lower bound exceeds upper bound")
        lower.append(lo)
        upper.append(hi)
    n = len(names)
    obj_raw = _mapping(doc["objective"], "objective")
    _keys(obj_raw, "objective", ("certain", "uncertain"))
    certain = _coefficients(obj_raw["certain"], names, "objective.certain") if "certain" in obj_raw else None
    if "uncertain" in obj_raw:
        model, cols, grid = _model(obj_raw["uncertain"], names, "objective.uncertain")
        objective = UncertainObjective(model, cols, certain, grid)
    else:
        objective = np.zeros(n) if certain is None else certain
    rows, unc = [], []
    cons = doc.get("constraints") or []
    if not isinstance(cons, list):
        raise DocumentError("constraints", "expected a list")
    for i, c in enumerate(cons):
        p = f"constraints[{i + 1}]"
        c = _mapping(c, p)
        name = c.get("name", f"c{i + 1}")
        if not isinstance(name, str):
            raise DocumentError(f"{p}.name", "expected a string")
        if "uncertain" in c:
            _keys(c, p, ("name", "uncertain", "certain", "rhs"), ("rhs",))
            u_rhs = c["rhs"] == "uncertain"
            model, cols, grid = _model(c["uncertain"], names, f"{p}.uncertain", extra=1 if u_rhs else 0)
            cert = _coefficients(c["certain"], names, f"{p}.certain") if "certain" in c else None
            rhs = 0.0 if u_rhs else _finite(c["rhs"], f"{p}.rhs")
            unc.append(UncertainRow(model, cols, rhs, cert, grid, u_rhs, name))
        else:
            _keys(c, p, ("name", "coefficients", "relation", "rhs"), ("coefficients", "rhs"))
            rel = _RELATIONS.get(c.get("relation", "<="))
            if rel is None:
                raise DocumentError(f"{p}.relation", "must be one of <=, >=, ==")
            rows.append(LinearRow(_coefficients(c["coefficients"], names, f"{p}.coefficients"), rel,
                                  _finite(c["rhs"], f"{p}.rhs"), name))
    try:
        return UncertainLP(tuple(names), np.array(lower), np.array(upper), objective, tuple(rows), tuple(unc))
    except DocumentError:
        raise
    except ModelError as exc:
        raise DocumentError("", str(exc)) from exc


def parse(text: str) -> UncertainLP:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "document"
        raise DocumentError(where, f"malformed document: {getattr(exc, 'problem', exc)}") from exc
    return build_problem(doc)


def load(path) -> UncertainLP:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# serialization ----------------------------------------------------------

def _flt(v: float):
    v = float(v)
    return None if math.isinf(v) else v


def _coef_map(vec, names) -> dict:
    return {names[j]: float(c) for j, c in enumerate(vec) if c != 0.0}


def _model_doc(model, cols, grid, names) -> dict:
    colnames = [names[c] for c in cols]
    if isinstance(model, DiscretePossibility):
        return {"type": "discrete", "columns": colnames,
                "scenarios": [[float(v) for v in r] for r in model.scenarios],
                "degrees": [float(d) for d in model.degrees]}
    comps = model.components
    rho = grid.distortion.rho
    return {"type": "interval", "columns": colnames,
            "nominal": [float(c.nominal) for c in comps],
            "lower_spread": [float(c.lower_spread) for c in comps],
            "upper_spread": [float(c.upper_spread) for c in comps],
            "z1": [float(c.z1) for c in comps], "z2": [float(c.z2) for c in comps],
            "matrix": [[float(v) for v in r] for r in model.deviation_matrix],
            "gamma": float(model.budget.gamma), "z": float(model.budget.z), "ell": int(grid.ell),
            "rho": "identity" if rho is None else float(rho)}


def to_document(P: UncertainLP) -> dict:
    names = list(P.names)
    doc: dict = {"variables": [{"name": nm, "lower": _flt(lo), "upper": _flt(hi)}
                               for nm, lo, hi in zip(names, P.lower, P.upper)]}
    if P.objective_uncertain:
        o = P.objective
        obj = {"uncertain": _model_doc(o.model, o.columns, o.grid, names)}
        if o.certain is not None:
            obj["certain"] = _coef_map(o.certain, names)
    else:
        obj = {"certain": _coef_map(P.objective, names)}
    doc["objective"] = obj
    cons = []
    for r in P.rows:
        cons.append({"name": r.name, "coefficients": _coef_map(r.coefficients, names),
                     "relation": r.relation, "rhs": float(r.rhs)})
    for r in P.uncertain:
        item = {"name": r.name, "uncertain": _model_doc(r.model, r.columns, r.grid, names)}
        if r.certain is not None:
            item["certain"] = _coef_map(r.certain, names)
        item["rhs"] = "uncertain" if r.uncertain_rhs else float(r.rhs)
        cons.append(item)
    if cons:
        doc["constraints"] = cons
    return doc


def serialize(P: UncertainLP) -> str:
    return yaml.safe_dump(to_document(P), sort_keys=False, default_flow_style=None, width=120)


def program_to_dict(D: DeterministicProgram) -> dict:
    names = list(D.names)
    rows = []
    for k in range(len(D.b)):
        rows.append({"name": D.row_names[k], "coefficients": _coef_map(D.A[k], names),
                     "relation": D.relations[k], "rhs": float(D.b[k])})
    return {
        "format": PROGRAM_FORMAT,
        "kind": "lp" if D.is_lp else "socp",
        "sense": "min",
        "variables": [{"name": nm, "lower": _flt(lo), "upper": _flt(hi)}
                      for nm, lo, hi in zip(names, D.lower, D.upper)],
        "objective": _coef_map(D.c, names),
        "rows": rows,
        "cones": [{"bound": names[t], "vector": [names[i] for i in idx]} for t, idx in D.cones],
        "blocks": [{"name": b.name, "kind": b.kind, "rows": [b.rows[0] + 1, b.rows[1]],
                    "variables": names[b.variables[0]:b.variables[1]]} for b in D.blocks],
    }


def program_to_json(D: DeterministicProgram) -> str:
    return json.dumps(program_to_dict(D), indent=2) + "\n"
