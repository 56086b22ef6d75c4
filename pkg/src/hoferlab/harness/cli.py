"""``hoferlab`` command line: run scenarios, run suites, inspect labels."""

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .. import groupoid, poisson
from ..errors import ContractViolation
from .runner import FORMATS, exit_code, run_scenario, to_jsonl, write_reports
from .scenario import ScenarioError, load, loads
from .suites import SUITES, format_table, run_suite

HAMILTONIAN_FAMILIES = {
    "translation{a}": "-a * x_j * plateau; pushes the plateau at speed a",
    "bump{center,radius,height}": "C-infinity bump exp(1 - 1/(1 - |x-c|^2/r^2)) * height",
    "coordinate{i,scale}*plateau{lo,hi,margin}": "scale * x_i * plateau",
    "rotation{rate,center}": "(rate/2)|x - c|^2 * plateau",
    "custom{expression}": "expression over x1..xn times the plateau",
    "zero{}": "the zero Hamiltonian",
}
SEARCH_FAMILIES = {
    "translation": "cut-off translations, parameters (v, delta)",
    "rotation": "cut-off rotations about the region centre, parameters (omega, delta)",
}
STRUCTURES = ("symplectic2n:<n>", "heisenberg3", "product2x1", "custom", "control:contact3")
REALIZATIONS = ("pair:symplectic2n:<n>", "cotangent:heisenberg3")


def bundled_scenarios():
    root = resources.files("hoferlab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _read_scenario(ref):
    """A path, or the name of a bundled scenario."""
    path = Path(ref)
    if path.exists():
        return load(path)
    if ref in bundled_scenarios():
        text = (resources.files("hoferlab") / "scenarios" / f"{ref}.toml").read_text("utf-8")
        return loads(text, ref)
    raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")


def default_jobs():
    try:
        return max(1, int(os.environ.get("HOFERLAB_JOBS", "1")))
    except ValueError:
        return 1


def cmd_run(args):
    code = 0
    for ref in args.scenarios:
        try:
            scn = _read_scenario(ref)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        records = run_scenario(scn, args.seed, args.grid, args.tol, args.jobs, args.timing)
        if args.out:
            for path in write_reports(records, args.out, scn.id, args.format):
                print(f"wrote {path}", file=sys.stderr)
        else:
            sys.stdout.write(to_jsonl(records))
        for rec in records:
            if rec["status"] == "fail":
                print(f"failed: {json.dumps(rec)}", file=sys.stderr)
        code = max(code, exit_code(records))
    return code


def cmd_suite(args):
    if args.name not in SUITES:
        print(f"error: unknown suite {args.name!r}; choose from {', '.join(SUITES)}",
              file=sys.stderr)
        return 2
    results = run_suite(args.name, args.seed)
    table = format_table(results)
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"suite-{args.name}.txt").write_text(table, encoding="utf-8")
    return 0 if all(r.passed for r in results) else 1


def cmd_list_structures(args):
    for label in STRUCTURES:
        print(label)
    for label in REALIZATIONS:
        print(label)
    return 0


def cmd_list_families(args):
    print("hamiltonian families (scenario declarations, optional 'g(t)*' prefix):")
    for k, v in HAMILTONIAN_FAMILIES.items():
        print(f"  {k:<44} {v}")
    print("search families (displacement_upper_bound):")
    for k, v in SEARCH_FAMILIES.items():
        print(f"  {k:<44} {v}")
    print("bundled scenarios:")
    for name in bundled_scenarios():
        print(f"  {name}")
    return 0


def _describe(label):
    if label.startswith("pair:") or label in groupoid.REALIZATIONS:
        R = groupoid.get_realization(label)
        return {"kind": "realization", "label": R.label, "dimension": R.dimension,
                "base": R.base.label, "source_axes": list(R.source_axes),
                "description": R.description}
    if label in SEARCH_FAMILIES:
        return {"kind": "search family", "label": label, "description": SEARCH_FAMILIES[label]}
    P = poisson.get_structure(label)
    return {"kind": "structure", "label": P.label, "dimension": P.dimension,
            "symplectic": P.symplectic, "constant": P.constant, "casimirs": len(P.casimirs),
            "leaf_axes": None if P.leaf_axes is None else list(P.leaf_axes),
            "description": P.description}


def cmd_describe(args):
    try:
        info = _describe(args.label)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(info, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="hoferlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run scenario files or bundled scenarios")
    run.add_argument("scenarios", nargs="+")
    run.add_argument("--out", help="directory for reports (default: JSON lines on stdout)")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--grid", type=int, help="override the grid resolution")
    run.add_argument("--tol", type=float, help="override integrator rtol and atol")
    run.add_argument("--jobs", type=int, default=default_jobs(),
                     help="parallel experiments (default: HOFERLAB_JOBS or 1)")
    run.add_argument("--format", choices=FORMATS, default="both")
    run.add_argument("--timing", action="store_true", help="record runtime_ms")
    run.set_defaults(func=cmd_run)

    suite = sub.add_parser("suite", help="run a bundled invariant suite")
    suite.add_argument("name")
    suite.add_argument("--seed", type=int, default=0)
    suite.add_argument("--out")
    suite.set_defaults(func=cmd_suite)

    sub.add_parser("list-structures").set_defaults(func=cmd_list_structures)
    sub.add_parser("list-families").set_defaults(func=cmd_list_families)
    desc = sub.add_parser("describe")
    desc.add_argument("label")
    desc.set_defaults(func=cmd_describe)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
