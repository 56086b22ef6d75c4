"""Execute scenarios and write JSON-lines / CSV reports.

Experiments may run on a thread pool; records are always emitted in
scenario-file order.  ``runtime_ms`` is filled only when timing is requested,
so default reports are byte-identical across runs.
"""

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import UnsupportedGeometry
from ..integrators import IntegratorSpec
from .ops import OPERATIONS, Context
from .scenario import SCHEMA_VERSION

FIELDS = ("schema_version", "scenario_id", "index", "op", "status", "value", "lower", "upper",
          "witness_params", "margin", "grid", "runtime_ms", "diagnostics")
STATUSES = ("pass", "fail", "inconclusive", "not-implemented")
FORMATS = ("jsonl", "csv", "both")


def plain(obj):
    """JSON-ready copy: numpy to builtins, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def make_context(scn, seed=None, grid=None, tol=None):
    spec_args = dict(scn.integrator)
    if tol is not None:
        spec_args.update(rtol=float(tol), atol=float(tol))
    resolution = grid if grid is not None else scn.grid.get("resolution")
    return Context(scn, scn.seed if seed is None else int(seed), IntegratorSpec(**spec_args),
                   resolution, int(scn.grid.get("time_nodes", 65)))


def run_experiment(ctx, index, exp, timing=False):
    start = time.perf_counter()
    op = exp["op"]
    try:
        fields = OPERATIONS[op](ctx, exp)
    except UnsupportedGeometry as exc:
        fields = {"status": "not-implemented", "diagnostics": {"error": str(exc)}}
    except Exception as exc:  # the record carries the failure
        fields = {"status": "fail", "diagnostics": {"error": f"{type(exc).__name__}: {exc}"}}
    record = dict.fromkeys(FIELDS)
    record.update(schema_version=SCHEMA_VERSION, scenario_id=ctx.scenario.id, index=index,
                  op=op)
    record.update(fields)
    if "name" in exp:
        record["diagnostics"] = {"name": exp["name"], **(record["diagnostics"] or {})}
    if timing:
        record["runtime_ms"] = round(1000.0 * (time.perf_counter() - start), 3)
    return plain(record)


def run_scenario(scn, seed=None, grid=None, tol=None, jobs=1, timing=False):
    """One record per experiment, in file order."""
    ctx = make_context(scn, seed, grid, tol)
    items = list(enumerate(scn.experiments))
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_experiment, ctx, i, e, timing) for i, e in items]
            return [f.result() for f in futures]
    return [run_experiment(ctx, i, e, timing) for i, e in items]


def to_jsonl(records):
    return "".join(json.dumps(r, sort_keys=False, allow_nan=False) + "\n" for r in records)


def to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow(["" if r[k] is None else
                    json.dumps(r[k], allow_nan=False) if isinstance(r[k], (dict, list)) else r[k]
                    for k in FIELDS])
    return buf.getvalue()


def write_reports(records, out_dir, stem, fmt="both"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if fmt in ("jsonl", "both"):
        paths.append(out / f"{stem}.jsonl")
        paths[-1].write_text(to_jsonl(records), encoding="utf-8")
    if fmt in ("csv", "both"):
        paths.append(out / f"{stem}.csv")
        paths[-1].write_text(to_csv(records), encoding="utf-8")
    return paths


def exit_code(records):
    return 1 if any(r["status"] == "fail" for r in records) else 0


__all__ = ["FIELDS", "FORMATS", "STATUSES", "exit_code", "make_context", "plain",
           "run_experiment", "run_scenario", "to_csv", "to_jsonl", "write_reports"]
