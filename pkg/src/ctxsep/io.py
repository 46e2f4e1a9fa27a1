"""File formats: problem JSON, result JSON/CSV and tidy CSV tables.

A problem file looks like::

    {
      "aggregate": [1.0, 2.0, ...]            # or "aggregate.csv"
      "sources": [
        {"name": "a", "features": "a.csv",     # inline rows, path, or null
         "loss": {"norm": "l1", "op": "smooth:2", "weight": 1.0},
         "reg": {"norm": "l1", "op": "diff", "weight": 0.1},
         "theta_ridge": 0.0, "nonneg": true}
      ],
      "solver": {"eps_abs": 1e-5, ...}        # optional
    }

Feature files are headerless CSV with one row per time step; relative paths
are resolved against the directory of the problem file.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .core import FeatureBlock, SeparationProblem, SeparationResult, SourceModelSpec, build_problem
from .errors import ParseError
from .solver import SolverConfig

__all__ = [
    "load_problem",
    "problem_to_dict",
    "save_problem",
    "result_to_dict",
    "write_result",
    "load_result_json",
    "load_result_csv",
    "write_table_csv",
    "read_table_csv",
    "load_matrix_csv",
]


def load_matrix_csv(path) -> np.ndarray:
    """Headerless numeric CSV as a 2-D array (rows are time steps)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _resolve(value, base_dir, what):
    if isinstance(value, str):
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        return load_matrix_csv(path)
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{what} must be a number array or a CSV path") from exc


def _term(d, what):
    d = dict(d or {})
    unknown = set(d) - {"norm", "op", "weight"}
    if unknown:
        raise ParseError(f"{what}: unknown keys {sorted(unknown)}")
    return d.get("norm"), d.get("op", "identity"), float(d.get("weight", 1.0))


def load_problem(path):
    """Read a problem file; returns ``(SeparationProblem, SolverConfig)``."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", row=exc.lineno) from exc
    if not isinstance(doc, dict) or "aggregate" not in doc or "sources" not in doc:
        raise ParseError(f"{path}: expected an object with 'aggregate' and 'sources'")
    agg = _resolve(doc["aggregate"], base_dir, "aggregate").reshape(-1)
    T = len(agg)
    sources = []
    for j, s in enumerate(doc["sources"]):
        what = f"{path}: source {j}"
        unknown = set(s) - {"name", "features", "loss", "reg", "theta_ridge", "nonneg"}
        if unknown:
            raise ParseError(f"{what}: unknown keys {sorted(unknown)}")
        name = str(s.get("name", f"source_{j + 1}"))
        feats = s.get("features")
        if feats is None or (isinstance(feats, list) and len(feats) == 0):
            block = FeatureBlock.empty(name, T)
        else:
            block = FeatureBlock(name, _resolve(feats, base_dir, f"{what} features"))
        lnorm, lop, lw = _term(s.get("loss", {"norm": "sq_l2"}), f"{what} loss")
        rnorm, rop, rw = _term(s.get("reg", {"norm": "none"}), f"{what} reg")
        try:
            spec = SourceModelSpec(
                loss_norm=lnorm or "sq_l2", loss_operator=lop, loss_weight=lw,
                reg_norm=rnorm or "none", reg_operator=rop, reg_weight=rw,
                theta_ridge=float(s.get("theta_ridge", 0.0)), nonneg=bool(s.get("nonneg", False)),
            )
        except ValueError as exc:
            raise ParseError(f"{what}: {exc}") from exc
        sources.append((block, spec))
    problem = build_problem(agg, sources)
    try:
        config = SolverConfig.from_dict(doc.get("solver"))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: solver block: {exc}") from exc
    return problem, config


def problem_to_dict(problem: SeparationProblem, config: SolverConfig | None = None) -> dict:
    """Inline JSON form of a problem (features embedded as nested lists)."""
    doc = {"aggregate": problem.aggregate.values.tolist(), "sources": []}
    for block, spec in problem.sources:
        doc["sources"].append({
            "name": block.name,
            "features": block.matrix.tolist() if block.n else None,
            "loss": {"norm": spec.loss_norm.value, "op": spec.loss_operator.spec(), "weight": spec.loss_weight},
            "reg": {"norm": spec.reg_norm.value, "op": spec.reg_operator.spec(), "weight": spec.reg_weight},
            "theta_ridge": spec.theta_ridge,
            "nonneg": spec.nonneg,
        })
    if config is not None:
        doc["solver"] = config.to_dict()
    return doc


def save_problem(path, problem: SeparationProblem, config: SolverConfig | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem, config), fh, indent=1, sort_keys=True)
        fh.write("\n")


def result_to_dict(result: SeparationResult) -> dict:
    names = result.names or [f"source_{i + 1}" for i in range(result.Y_hat.shape[1])]
    return {
        "names": list(names),
        "Y_hat": {n: result.Y_hat[:, i].tolist() for i, n in enumerate(names)},
        "theta": {n: np.asarray(t).tolist() for n, t in zip(names, result.theta_hat)},
        "objective": result.objective,
        "iterations": result.iterations,
        "primal_residual": result.primal_residual,
        "dual_residual": result.dual_residual,
        "converged": result.converged,
    }


def write_result(path, result: SeparationResult, emit: str = "json") -> None:
    """Write a result as JSON (everything) or CSV (one column per source)."""
    if emit == "json":
        with open(path, "w") as fh:
            json.dump(result_to_dict(result), fh, indent=1, sort_keys=True)
            fh.write("\n")
    elif emit == "csv":
        names = result.names or [f"source_{i + 1}" for i in range(result.Y_hat.shape[1])]
        rows = [{"t": t, **{n: float(result.Y_hat[t, i]) for i, n in enumerate(names)}}
                for t in range(result.Y_hat.shape[0])]
        write_table_csv(path, rows, ["t", *names])
    else:
        raise ValueError(f"unknown output format {emit!r}")


def load_result_json(path) -> SeparationResult:
    with open(path) as fh:
        d = json.load(fh)
    names = d["names"]
    Y = np.column_stack([np.asarray(d["Y_hat"][n], dtype=float) for n in names])
    return SeparationResult(
        Y_hat=Y,
        theta_hat=[np.asarray(d["theta"][n], dtype=float) for n in names],
        objective=float(d["objective"]),
        iterations=int(d["iterations"]),
        primal_residual=float(d["primal_residual"]),
        dual_residual=float(d["dual_residual"]),
        converged=bool(d["converged"]),
        names=list(names),
    )


def load_result_csv(path):
    """Read a CSV written with ``emit="csv"``; returns ``(names, T x k array)``."""
    rows = read_table_csv(path)
    if not rows:
        raise ParseError(f"{path}: no rows")
    names = [c for c in rows[0] if c != "t"]
    return names, np.array([[r[n] for n in names] for r in rows], dtype=float)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table_csv(path, rows, columns) -> None:
    """Tidy CSV with a header; floats use shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _parse_cell(s):
    if s in ("true", "false"):
        return s == "true"
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def read_table_csv(path) -> list:
    """Inverse of :func:`write_table_csv`; numbers and booleans are converted."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]
