"""Oscillation norms, isotopy lengths and displacement-energy estimates.

Lengths are Simpson integrals of grid oscillations; the grid always contains
the value 0 because every Hamiltonian here is compactly supported.
Displacement energies are bounded above by the best verified displacing
member of a declared parametric family, and below by half a capacity.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate as quad
from scipy import optimize

from . import poisson
from .errors import ContractViolation, UnsupportedGeometry
from .flows import Isotopy
from .hamiltonians import (Affine, Box, Plateau, Product, Quadratic, TermsHamiltonian,
                           TimeDependentHamiltonian, as_box, separable)
from .integrators import DEFAULT_SPEC, IntegratorSpec
from .sampling import Ball, BoxRegion, Sampler, as_region

DEFAULT_RESOLUTION = 33
HIGH_DIMENSION_RESOLUTION = 16
DEFAULT_TIME_NODES = 65
MIN_RESOLUTION = 16
MIN_TIME_NODES = 33
REFINE_STEPS = 64
# gradient step lengths in cells, backtracked down to a small fraction of a cell
_FRACTIONS = tuple(2.0 ** -k for k in range(-1, 11))
CHUNK = 250_000
INFEASIBLE_PENALTY = 100.0


# -- grids -------------------------------------------------------------------------


@dataclass(frozen=True)
class OscillationGrid:
    """Tensor grid over a support box plus Simpson nodes in time.

    ``extra`` holds per-axis coordinates merged into the uniform axes (used to
    put a leaf's normal coordinate on the grid).
    """

    support: Box
    resolution: int = None
    time_nodes: int = DEFAULT_TIME_NODES
    refine_steps: int = REFINE_STEPS
    extra: tuple = None

    def __post_init__(self):
        box = as_box(self.support)
        if box is None:
            raise ContractViolation("oscillation grids need a compact support box")
        object.__setattr__(self, "support", box)
        if self.resolution is None:
            res = DEFAULT_RESOLUTION if box.dimension <= 3 else HIGH_DIMENSION_RESOLUTION
            object.__setattr__(self, "resolution", res)
        if self.resolution < MIN_RESOLUTION:
            raise ContractViolation(f"grid resolution must be >= {MIN_RESOLUTION}")
        if self.time_nodes < MIN_TIME_NODES or self.time_nodes % 2 == 0:
            raise ContractViolation(f"time nodes must be odd and >= {MIN_TIME_NODES}")
        extra = self.extra or tuple(() for _ in range(box.dimension))
        object.__setattr__(self, "extra", tuple(tuple(float(v) for v in e) for e in extra))

    @classmethod
    def for_hamiltonian(cls, F, resolution=None, time_nodes=DEFAULT_TIME_NODES, **kw):
        if F.support is None:
            raise ContractViolation(f"{F!r} is not compactly supported; no oscillation grid")
        return cls(F.support, resolution, time_nodes, **kw)

    @property
    def dimension(self):
        return self.support.dimension

    def axes(self):
        out = []
        for (a, b), extra in zip(zip(self.support.lo, self.support.hi), self.extra):
            ax = np.array([a]) if a == b else np.linspace(a, b, self.resolution)
            inside = [v for v in extra if a <= v <= b]
            out.append(np.union1d(ax, inside) if inside else ax)
        return out

    def points(self):
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def cell(self):
        return self.support.widths / (self.resolution - 1)

    def times(self, t_span=(0.0, 1.0)):
        return np.linspace(t_span[0], t_span[1], self.time_nodes)

    def with_values(self, axis, values):
        extra = list(self.extra)
        extra[axis] = tuple(extra[axis]) + tuple(values)
        return replace(self, extra=tuple(extra))


def _as_spatial(F_t):
    if hasattr(F_t, "value") and not isinstance(F_t, TimeDependentHamiltonian):
        return F_t
    return poisson.as_function(F_t, None)


# -- extrema -------------------------------------------------------------------------


def _values_at_times(F, times, pts):
    """``F(t_k, p_j)`` as an array ``(len(times), len(pts))``."""
    if isinstance(F, TermsHamiltonian):
        S = np.stack([s.value(pts) for _, s in F.terms])                 # (K, P)
        W = np.stack([np.broadcast_to(p(times), times.shape) for p, _ in F.terms], axis=1)
        return W @ S
    nt, npts = len(times), len(pts)
    out = np.empty((nt, npts))
    per = max(1, CHUNK // max(1, npts))
    for k0 in range(0, nt, per):
        ks = slice(k0, min(nt, k0 + per))
        T = np.repeat(times[ks], npts)
        X = np.tile(pts, (len(times[ks]), 1))
        out[ks] = F.value(T, X).reshape(-1, npts)
    return out


def _refine(value, grad, hess, X, sign, box, cell, steps):
    """Local steps towards a max (``sign=1``) or min (``sign=-1``) near grid optima.

    Each step tries a Newton step and gradient steps from two cells down to a
    thousandth of a cell (the gradient steps handle flat or linear pieces
    where Newton stalls) and keeps the best improving candidate.  All
    candidates go through one batched evaluation.  A row stops once no
    candidate improves it; iteration ends after ``steps`` rounds.

    ``value``, ``grad`` and ``hess`` take ``(rows, X)``: the original row of
    each point (for per-row times) and the points.
    """
    X = X.copy()
    m, n = X.shape
    best = value(np.arange(m), X)
    moving = cell > 0
    active = np.ones(m, dtype=bool)
    for _ in range(steps):
        rows = np.nonzero(active)[0]
        if len(rows) == 0:
            break
        Xa = X[rows]
        g = np.where(moving, grad(rows, Xa), 0.0)
        H = hess(rows, Xa)
        try:
            dx = -np.linalg.solve(H, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            dx = -np.einsum("mij,mj->mi", np.linalg.pinv(H), g)
        cands = [np.clip(np.nan_to_num(dx), -2.0 * cell, 2.0 * cell)]
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.min(np.where(np.abs(g) > 0, cell / np.abs(g), np.inf), axis=-1)
        scale = np.where(np.isfinite(scale), scale, 0.0)[:, None]
        cands += [sign * frac * scale * g for frac in _FRACTIONS]
        k = len(rows)
        cand = np.clip(Xa[None] + np.stack(cands), box.low, box.high)       # (C, k, n)
        vals = sign * value(np.tile(rows, len(cands)), cand.reshape(-1, n)).reshape(len(cands), k)
        pick = np.argmax(vals, axis=0)
        top = vals[pick, np.arange(k)]
        better = top > sign * best[rows]
        X[rows[better]] = cand[pick, np.arange(k)][better]
        best[rows[better]] = sign * top[better]
        active[rows[~better]] = False
    return best


def _extrema(F, times, grid, refine):
    pts = grid.points()
    vals = _values_at_times(F, times, pts)
    i_max, i_min = np.argmax(vals, axis=1), np.argmin(vals, axis=1)
    vmax = vals[np.arange(len(times)), i_max]
    vmin = vals[np.arange(len(times)), i_min]
    if refine and grid.refine_steps > 0:
        cell = np.where(grid.cell > 0, grid.cell, 0.0)
        T = np.asarray(times, dtype=float)
        fns = (lambda r, X: F.value(T[r], X), lambda r, X: F.grad(T[r], X),
               lambda r, X: F.hess(T[r], X))
        vmax = np.maximum(vmax, _refine(*fns, pts[i_max], 1.0, grid.support, cell,
                                        grid.refine_steps))
        vmin = np.minimum(vmin, _refine(*fns, pts[i_min], -1.0, grid.support, cell,
                                        grid.refine_steps))
    return np.maximum(vmax, 0.0), np.minimum(vmin, 0.0)


def spatial_oscillation(S, grid, refine=True):
    """``max S - min S`` for a time-independent spatial function, 0 included."""
    pts = grid.points()
    vals = S.value(pts)
    i_max, i_min = int(np.argmax(vals)), int(np.argmin(vals))
    vmax, vmin = float(vals[i_max]), float(vals[i_min])
    if refine and grid.refine_steps > 0:
        cell = np.where(grid.cell > 0, grid.cell, 0.0)
        fns = (lambda r, X: S.value(X), lambda r, X: S.grad(X), lambda r, X: S.hess(X))
        vmax = max(vmax, float(_refine(*fns, pts[[i_max]], 1.0, grid.support, cell,
                                       grid.refine_steps)[0]))
        vmin = min(vmin, float(_refine(*fns, pts[[i_min]], -1.0, grid.support, cell,
                                       grid.refine_steps)[0]))
    return max(vmax, 0.0) - min(vmin, 0.0)


def oscillation(F_t, grid, t=None, refine=True):
    """``||F_t|| = max F_t - min F_t`` on the grid, with 0 always in the value set.

    ``F_t`` is a spatial function, or a time-dependent Hamiltonian together
    with the time ``t``.
    """
    if isinstance(F_t, TimeDependentHamiltonian):
        if t is None:
            raise ContractViolation("oscillation of a time-dependent Hamiltonian needs t")
        vmax, vmin = _extrema(F_t, np.array([float(t)]), grid, refine)
        return float(vmax[0] - vmin[0])
    return spatial_oscillation(_as_spatial(F_t), grid, refine)


def oscillation_curve(F, grid=None, refine=True):
    """Time nodes and ``t -> ||F_t||`` on them."""
    grid = grid or OscillationGrid.for_hamiltonian(F)
    times = grid.times(F.t_span)
    if isinstance(F, TermsHamiltonian) and F.separable:
        profile, spatial = F.terms[0]
        osc = spatial_oscillation(spatial, grid, refine)
        return times, np.abs(np.broadcast_to(profile(times), times.shape)) * osc
    vmax, vmin = _extrema(F, times, grid, refine)
    return times, vmax - vmin


def length(F, grid=None, refine=True):
    """``l(Phi_F) = int ||F_t|| dt`` by composite Simpson on the grid's time nodes.

    Lifts to a groupoid report the length of the base Hamiltonian.
    """
    base = getattr(F, "base_hamiltonian", None)
    if base is not None:
        return length(base, None if grid is None else replace(grid, support=base.support),
                      refine)
    if F.support is not None and np.all(F.support.widths == 0):
        return 0.0
    times, curve = oscillation_curve(F, grid, refine)
    return float(quad.simpson(curve, x=times))


# -- displacement ----------------------------------------------------------------------


@dataclass(frozen=True)
class DisplacementCheck:
    displaced: bool
    verified: bool
    margin: float
    cell: float
    samples: int

    @property
    def status(self):
        if not self.displaced:
            return "not displaced"
        return "displaced" if self.verified else "displaced (unverified margin)"


def check_displaced(phi, U, sampler=None):
    """Whether ``phi(U)`` misses ``U`` on a dense deterministic sample of ``U``.

    The margin is the smallest signed distance of an image point to ``U``; it
    is verified when it exceeds the sample lattice spacing.
    """
    U = as_region(U)
    if U.empty:
        return DisplacementCheck(True, True, math.inf, 0.0, 0)
    pts, cell = (sampler or Sampler()).sample(U)
    margin = float(np.min(U.signed_distance(phi(pts))))
    return DisplacementCheck(margin > 0.0, margin > cell, margin, cell, len(pts))


@dataclass
class ParametricFamily:
    """Hamiltonians ``build(params)`` over a parameter box."""

    name: str
    names: tuple
    bounds: tuple
    build: object = field(repr=False)

    def describe(self, params):
        return {k: float(v) for k, v in zip(self.names, params)}


def _linear_sweep(P, j, speed, region, spec):
    """Bounding box swept by ``region`` under the uncut flow of ``-speed * x_j``."""
    n = P.dimension
    H = separable(Affine(n, j, -speed), P.label)
    pts = np.concatenate([region.bounding_box.corners(), region.boundary(64, 7)])
    times = np.linspace(0.0, 1.0, 9)
    iso = Isotopy(P, H, spec)
    T = np.repeat(times, len(pts))
    out = iso.transport(np.tile(pts, (len(times), 1)), 0.0, T)
    return Box.bounding(np.concatenate([out, pts]))


def translation_family(P, U, generator_index=None, speed_max=None, delta=(0.02, 0.5),
                       spec=None):
    """Cut-off translations ``-v (x_j - c_j) * plateau``.

    The plateau is 1 on the box swept by ``U`` at speed ``v`` and falls to 0
    a distance ``delta`` outside it.  Parameters are ``(v, delta)``.
    """
    U = as_region(U)
    n = P.dimension
    if n != U.dimension:
        raise ContractViolation("region and structure dimensions differ")
    spec = spec or DEFAULT_SPEC
    if generator_index is None:
        generator_index = n // 2 if P.symplectic else 0
    j = int(generator_index)
    c = U.bounding_box.center
    pts = U.boundary(32, 3)
    direction = poisson.hamiltonian_field(P, poisson.coordinate(j, n), pts)
    slowest = float(np.min(np.linalg.norm(direction, axis=-1)))
    if slowest == 0.0:
        raise ContractViolation(f"x{j + 1} generates no motion on the region")
    diameter = float(np.max(U.bounding_box.widths))
    vmax = speed_max if speed_max is not None else 3.0 * diameter / slowest

    def build(params):
        v, d = float(params[0]), float(params[1])
        inner = _linear_sweep(P, j, v, U, spec)
        plateau = Plateau(inner, inner.inflate(d))
        ham = separable(Product(Affine(n, j, -v, c[j]), plateau), P.label,
                        description=f"translation{{v={v:.6g},delta={d:.6g}}}")
        return ham

    return ParametricFamily("translation", ("v", "delta"), ((0.0, vmax), tuple(delta)), build)


def rotation_family(P, U, rate=(-2.0 * np.pi, 2.0 * np.pi), delta=(0.02, 0.5)):
    """``(omega/2)|x - c|^2 * plateau`` about the centre of ``U``; never displaces ``U``."""
    U = as_region(U)
    if not P.symplectic:
        raise ContractViolation("rotations need a symplectic structure")
    box = U.bounding_box
    c = box.center

    def build(params):
        w, d = float(params[0]), float(params[1])
        inner = box.inflate(1e-9)
        plateau = Plateau(inner, inner.inflate(d))
        return separable(Product(Quadratic(c, w), plateau), P.label,
                         description=f"rotation{{omega={w:.6g},delta={d:.6g}}}")

    return ParametricFamily("rotation", ("omega", "delta"), (tuple(rate), tuple(delta)), build)


FAMILIES = {"translation": translation_family, "rotation": rotation_family}


@dataclass(frozen=True)
class SearchBudget:
    starts: int = 8
    maxfev: int = 500
    seed_grid: int = 5
    xatol: float = 1e-4
    fatol: float = 1e-7


@dataclass
class HoferEstimate:
    """Two-sided box for a displacement energy; ``upper`` is inf when nothing was found."""

    target: str
    upper: float
    lower: float = 0.0
    witness: dict = None
    margin: float = None
    hamiltonian: object = field(default=None, repr=False)
    evaluations: int = 0
    notes: str = ""

    @property
    def finite(self):
        return math.isfinite(self.upper)


@dataclass
class DisplacementExperiment:
    structure: object
    region: object
    family: ParametricFamily
    budget: SearchBudget = field(default_factory=SearchBudget)
    sampler: Sampler = field(default_factory=Sampler)
    grid_resolution: int = None
    time_nodes: int = DEFAULT_TIME_NODES
    spec: IntegratorSpec = DEFAULT_SPEC
    result: HoferEstimate = None

    def __post_init__(self):
        self.region = as_region(self.region)


def _grid_for(F, exp):
    return OscillationGrid.for_hamiltonian(F, exp.grid_resolution, exp.time_nodes)


def _endpoint(exp, F):
    return Isotopy(exp.structure, F, exp.spec).endpoint()


def displacement_upper_bound(exp, known=()):
    """Best verified displacing member of the family, an upper bound for ``E(U)``.

    ``known`` are estimates for supersets ``V`` of ``U``; their witnesses are
    rescanned first, so the bound for ``U`` never exceeds theirs.
    """
    U = exp.region
    lower = capacity_lower_bound(exp.structure, U)
    label = f"E({U.describe()})"
    if U.empty:
        exp.result = HoferEstimate(label, 0.0, 0.0, witness={}, margin=math.inf,
                                   notes="the identity displaces the empty set")
        return exp.result
    fam = exp.family
    best = {"upper": math.inf, "params": None, "margin": None, "ham": None, "source": ""}
    cache = {}

    def consider(value, params, margin, ham, source):
        key = (value, tuple(np.round(params, 12)) if params is not None else ())
        cur = (best["upper"], tuple(np.round(best["params"], 12))
               if best["params"] is not None else ())
        if key < cur:
            best.update(upper=value, params=params, margin=margin, ham=ham, source=source)

    for est in known:
        if est.hamiltonian is None or not est.finite:
            continue
        chk = check_displaced(_endpoint(exp, est.hamiltonian), U, exp.sampler)
        if chk.verified:
            consider(est.upper, np.array(list(est.witness.values()), dtype=float),
                     chk.margin, est.hamiltonian, "superset witness")

    lo = np.array([b[0] for b in fam.bounds], dtype=float)
    hi = np.array([b[1] for b in fam.bounds], dtype=float)

    def objective(p):
        p = np.clip(np.asarray(p, dtype=float), lo, hi)
        key = tuple(np.round(p, 12))
        if key in cache:
            return cache[key]
        ham = fam.build(p)
        ell = length(ham, _grid_for(ham, exp))
        try:
            chk = check_displaced(_endpoint(exp, ham), U, exp.sampler)
        except ArithmeticError:
            chk = DisplacementCheck(False, False, -math.inf, 0.0, 0)
        if chk.verified:
            consider(ell, p, chk.margin, ham, "search")
            val = ell
        else:
            shortfall = chk.cell - chk.margin if math.isfinite(chk.margin) else 1e3
            val = INFEASIBLE_PENALTY + ell + 10.0 * shortfall
        cache[key] = val
        return val

    k = exp.budget.seed_grid
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(k) + 0.5) / k for i in range(len(lo))]
    seeds = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    scored = sorted(((objective(s), tuple(s)) for s in seeds))
    for _, s in scored[: exp.budget.starts]:
        optimize.minimize(objective, np.array(s), method="Nelder-Mead",
                          bounds=list(zip(lo, hi)),
                          options={"maxfev": exp.budget.maxfev, "xatol": exp.budget.xatol,
                                   "fatol": exp.budget.fatol})
    evaluations = len(cache)
    if best["params"] is None:
        exp.result = HoferEstimate(label, math.inf, lower, evaluations=evaluations,
                                   notes=f"no verified displacement in the {fam.name} family "
                                         f"within budget")
        return exp.result
    exp.result = HoferEstimate(label, float(best["upper"]), lower,
                               witness=fam.describe(best["params"]), margin=best["margin"],
                               hamiltonian=best["ham"], evaluations=evaluations,
                               notes=f"upper bound from {best['source']} ({fam.name} family)")
    return exp.result


# -- capacities ----------------------------------------------------------------------------


def gromov_width_lower(U, structure=None, leaf=None):
    """Gromov width of a round ball where it is known exactly.

    Standard-type constant symplectic structures give ``pi r^2``; a
    two-dimensional leaf gives its symplectic area of ``U`` cut with the leaf.
    """
    U = as_region(U)
    if not isinstance(U, Ball):
        raise UnsupportedGeometry("Gromov widths are only implemented for round balls")
    if U.empty:
        return 0.0
    if leaf is not None:
        if leaf.dimension != 2 or not leaf.affine:
            raise UnsupportedGeometry("only two-dimensional affine leaves are supported")
        d = float(leaf.distance(np.asarray(U.center))[0])
        if d >= U.radius:
            return 0.0
        rho2 = U.radius**2 - d**2
        return abs(float(leaf.sigma[0, 1])) * np.pi * rho2
    if structure is None or not (structure.symplectic and structure.constant):
        raise UnsupportedGeometry("width needs a constant symplectic chart or a leaf")
    L = structure.matrix(np.zeros(structure.dimension))[0]
    if structure.dimension == 2:
        return abs(float(np.linalg.inv(L)[0, 1])) * np.pi * U.radius**2
    if np.allclose(L @ L.T, np.eye(structure.dimension), atol=1e-12):
        return np.pi * U.radius**2
    raise UnsupportedGeometry("non-standard constant symplectic structure")


def capacity_lower_bound(P, U, leaves=17):
    """``c_Lambda(U) / 2``: half the best Gromov width over the leaves met by ``U``.

    Returns 0 where no width is available (the lower bound is then trivial).
    """
    U = as_region(U)
    if U.empty or not isinstance(U, Ball):
        return 0.0
    try:
        if P.symplectic:
            return 0.5 * gromov_width_lower(U, P)
        if P.leaf_axes is None:
            return 0.0
        normal = [k for k in range(P.dimension) if k not in P.leaf_axes]
        best = 0.0
        c = np.asarray(U.center)
        offsets = np.linspace(-U.radius, U.radius, leaves)[1:-1]
        for axis in normal:
            for off in offsets:
                x = c.copy()
                x[axis] += off
                leaf = poisson.leaf_at(P, x)
                if leaf.dimension == 2:
                    best = max(best, gromov_width_lower(U, leaf=leaf))
        return 0.5 * best
    except UnsupportedGeometry:
        return 0.0


@dataclass(frozen=True)
class CapacityReport:
    lower: float
    upper: float

    @property
    def holds(self):
        return self.lower <= self.upper + 1e-12


def energy_capacity_check(exp):
    """``c_Lambda(U)/2 <= upper bound on E(U)``; a failure means an estimator bug."""
    est = exp.result or displacement_upper_bound(exp)
    return CapacityReport(capacity_lower_bound(exp.structure, exp.region), est.upper)


# -- leaves ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class LeafReport:
    leaf_length: float
    ambient_length: float

    @property
    def holds(self):
        return self.leaf_length <= self.ambient_length + 1e-12


def leaf_restriction_check(F, leaf, resolution=None, time_nodes=DEFAULT_TIME_NODES):
    """Leaf length of ``F_L`` against the ambient length of ``F`` on trace grids.

    The ambient grid carries the leaf's normal coordinates, so the leaf grid
    is a subset of it and the inequality is exact at every time node.
    """
    FL = poisson.restrict_to_leaf(F, leaf)
    if F.support is None:
        raise ContractViolation("leaf restriction check needs a compactly supported F")
    grid = OscillationGrid(F.support, resolution, time_nodes, refine_steps=0)
    axes = [int(np.argmax(np.abs(leaf.basis[:, k]))) for k in range(leaf.dimension)]
    for k in range(F.dimension):
        if k not in axes:
            grid = grid.with_values(k, [float(leaf.origin[k])])
    ambient = length(F, grid, refine=False)
    if np.all(FL.support.widths == 0):
        return LeafReport(0.0, ambient)
    leaf_grid = OscillationGrid(FL.support, grid.resolution, time_nodes, refine_steps=0)
    return LeafReport(length(FL, leaf_grid, refine=False), ambient)


__all__ = [
    "OscillationGrid", "oscillation", "spatial_oscillation", "oscillation_curve", "length",
    "check_displaced", "DisplacementCheck", "ParametricFamily", "translation_family",
    "rotation_family", "FAMILIES", "SearchBudget", "HoferEstimate", "DisplacementExperiment",
    "displacement_upper_bound", "gromov_width_lower", "capacity_lower_bound",
    "energy_capacity_check", "CapacityReport", "leaf_restriction_check", "LeafReport",
    "Ball", "BoxRegion", "Sampler",
]
