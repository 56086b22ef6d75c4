"""Scenario files: TOML documents declaring structures, Hamiltonians and experiments.

The schema is documented in ``docs/scenarios.md``.  Loading validates every
label and op before anything runs; problems raise :class:`ScenarioError`
carrying a line and column in the source text.
"""

import ast
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import groupoid, hamiltonians as hm, poisson
from ..errors import ContractViolation
from ..hamiltonians import Box, Plateau

SCHEMA_VERSION = 1
MAX_SEED = 2**64 - 1
TOP_KEYS = {"id", "structure", "seed", "description", "bivector", "dimension", "grid",
            "integrator", "hamiltonians", "experiments"}
HAMILTONIAN_KEYS = {"family", "profile", "structure", "plateau", "margin", "generator"}
FAMILY_NAMES = ("translation", "bump", "coordinate", "custom", "rotation", "zero")


class ScenarioError(Exception):
    """A parse or schema error, located in the scenario text when possible."""

    def __init__(self, message, line=None, column=None):
        self.message, self.line, self.column = message, line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


def _locate(text, needle):
    """1-based line and column of the first occurrence of ``needle``."""
    if text is None or not needle:
        return None, None
    idx = text.find(str(needle))
    if idx < 0:
        return None, None
    line = text.count("\n", 0, idx) + 1
    return line, idx - (text.rfind("\n", 0, idx) + 1) + 1


@dataclass
class Scenario:
    id: str
    structure: str
    seed: int = 0
    description: str = ""
    bivector: dict = None
    dimension: int = None
    grid: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    hamiltonians: dict = field(default_factory=dict)
    experiments: list = field(default_factory=list)
    source: str = field(default=None, repr=False)

    def error(self, message, needle=None):
        return ScenarioError(message, *_locate(self.source, needle))

    def base_structure(self):
        return poisson.get_structure(self.structure, self.bivector, self.dimension)

    def resolve_structure(self, label=None):
        if label in (None, self.structure):
            return self.base_structure()
        return poisson.get_structure(label)


def loads(text, name="<scenario>"):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        msg = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(exc))
        raise ScenarioError(f"{name}: {msg}", line, col) from None
    return from_mapping(data, text)


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, str(path))


def from_mapping(data, text=None):
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ScenarioError(f"unknown top-level key {unknown[0]!r}", *_locate(text, unknown[0]))
    for key in ("id", "structure"):
        if key not in data:
            raise ScenarioError(f"missing required key {key!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= MAX_SEED:
        raise ScenarioError("seed must be an integer in [0, 2^64)", *_locate(text, "seed"))
    scn = Scenario(id=str(data["id"]), structure=str(data["structure"]), seed=seed,
                   description=str(data.get("description", "")),
                   bivector=data.get("bivector"), dimension=data.get("dimension"),
                   grid=dict(data.get("grid", {})), integrator=dict(data.get("integrator", {})),
                   hamiltonians=dict(data.get("hamiltonians", {})),
                   experiments=list(data.get("experiments", [])), source=text)
    validate(scn)
    return scn


def validate(scn):
    from .ops import OPERATIONS

    try:
        scn.base_structure()
    except ContractViolation as exc:
        raise scn.error(str(exc), scn.structure) from None
    for key in scn.grid:
        if key not in ("resolution", "time_nodes"):
            raise scn.error(f"unknown grid key {key!r}", key)
    for key in scn.integrator:
        if key not in ("method", "rtol", "atol", "steps", "max_steps"):
            raise scn.error(f"unknown integrator key {key!r}", key)
    for name, decl in scn.hamiltonians.items():
        if not isinstance(decl, dict) or "family" not in decl:
            raise scn.error(f"hamiltonian {name!r} needs a 'family'", name)
        bad = sorted(set(decl) - HAMILTONIAN_KEYS)
        if bad:
            raise scn.error(f"unknown key {bad[0]!r} in hamiltonian {name!r}", bad[0])
        try:
            build_hamiltonian(scn, name)
        except (ContractViolation, ValueError, SyntaxError) as exc:
            raise scn.error(f"hamiltonian {name!r}: {exc}", decl["family"]) from None
    for i, exp in enumerate(scn.experiments):
        op = exp.get("op") if isinstance(exp, dict) else None
        if op not in OPERATIONS:
            raise scn.error(f"experiment {i}: unknown op {op!r}", op)
        for key in ("hamiltonian", "other", "diffeomorphism"):
            ref = exp.get(key)
            if ref is not None and ref not in scn.hamiltonians:
                raise scn.error(f"experiment {i}: undeclared hamiltonian {ref!r}", ref)
        if "realization" in exp:
            try:
                groupoid.get_realization(exp["realization"])
            except ContractViolation as exc:
                raise scn.error(f"experiment {i}: {exc}", exp["realization"]) from None
        if "structure" in exp:
            try:
                scn.resolve_structure(exp["structure"])
            except ContractViolation as exc:
                raise scn.error(f"experiment {i}: {exc}", exp["structure"]) from None


# -- Hamiltonian declarations ---------------------------------------------------------------

_FAMILY_RE = re.compile(r"\b(" + "|".join(FAMILY_NAMES) + r")\{")


def _split_family(text):
    """``'g(t)·family{args}'`` into ``(profile or None, family name, arg text, rest)``."""
    text = text.strip()
    m = _FAMILY_RE.search(text)
    if m is None:
        raise ContractViolation(f"unknown family in {text!r}; expected one of {FAMILY_NAMES}")
    head = text[: m.start()].rstrip()
    profile = None
    if head:
        if head[-1] not in "*·":
            raise ContractViolation(f"cannot read time profile in {text!r}")
        profile = head[:-1].strip()
    depth, end = 0, None
    for k in range(m.end() - 1, len(text)):
        depth += {"{": 1, "}": -1}.get(text[k], 0)
        if depth == 0:
            end = k
            break
    if end is None:
        raise ContractViolation(f"unbalanced braces in {text!r}")
    return profile, m.group(1), text[m.end(): end], text[end + 1:].strip()


def _literal_args(args):
    if not args.strip():
        return ()
    value = ast.literal_eval(f"({args},)")
    return tuple(value)


def _plateau_from(rest, decl, n):
    """Plateau from ``·plateau{lo, hi[, margin]}`` or the declaration's ``plateau`` box."""
    margin = float(decl.get("margin", 1.0))
    if rest:
        m = re.fullmatch(r"[*·]\s*plateau\{(.*)\}", rest)
        if m is None:
            raise ContractViolation(f"cannot read {rest!r}; expected '·plateau{{lo, hi}}'")
        vals = _literal_args(m.group(1))
        if len(vals) == 3:
            margin = float(vals[2])
        lo, hi = vals[0], vals[1]
    elif "plateau" in decl:
        lo, hi = decl["plateau"]
    else:
        return None
    inner = Box(tuple(np.broadcast_to(lo, n)), tuple(np.broadcast_to(hi, n)))
    return Plateau(inner, inner.inflate(margin))


def build_hamiltonian(scn, name):
    """The declared Hamiltonian ``name`` of a scenario."""
    decl = scn.hamiltonians[name]
    P = scn.resolve_structure(decl.get("structure"))
    n, label = P.dimension, P.label
    profile, family, args, rest = _split_family(str(decl["family"]))
    if "profile" in decl:
        if profile is not None:
            raise ContractViolation("time profile given twice")
        profile = str(decl["profile"])
    profile = 1.0 if profile is None else profile
    vals = _literal_args(args) if family != "custom" else ()
    plateau = _plateau_from(rest, decl, n)
    if family == "zero":
        return hm.zero(n, label)
    if family == "translation":
        return hm.translation(n, label, float(vals[0]), decl.get("generator"), plateau, profile)
    if family == "bump":
        center, radius, height = vals[0], float(vals[1]), float(vals[2]) if len(vals) > 2 else 1.0
        center = np.broadcast_to(np.asarray(center, dtype=float), (n,))
        return hm.bump(label, center, radius, height, profile)
    if family == "coordinate":
        scale = float(vals[1]) if len(vals) > 1 else 1.0
        return hm.coordinate_plateau(n, label, int(vals[0]) - 1, scale, plateau, profile)
    if family == "rotation":
        center = np.broadcast_to(np.asarray(vals[1] if len(vals) > 1 else 0.0, dtype=float), (n,))
        plateau = plateau or hm.default_plateau(n)
        return hm.rotation(label, center, float(vals[0]), plateau, profile)
    return hm.custom(label, n, args, plateau, profile)


__all__ = ["SCHEMA_VERSION", "Scenario", "ScenarioError", "build_hamiltonian", "load", "loads"]
