"""Experiment operations reachable from scenario files.

Each handler takes the run context and the experiment table and returns the
record fields it owns.  ``COVERAGE`` names the library operations each
experiment op exercises.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .. import flows, groupoid, hofer, poisson
from ..hamiltonians import Box, Profile
from ..integrators import IntegratorSpec
from ..sampling import Ball, Sampler, as_region
from .scenario import build_hamiltonian

FLOW_TOL = 1e-6
LENGTH_TOL = 1e-6


@dataclass
class Context:
    scenario: object
    seed: int
    spec: IntegratorSpec
    resolution: int = None
    time_nodes: int = hofer.DEFAULT_TIME_NODES
    _searches: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def grid(self):
        return {"resolution": self.resolution, "time_nodes": self.time_nodes}

    def structure(self, exp=None):
        return self.scenario.resolve_structure((exp or {}).get("structure"))

    def hamiltonian(self, name):
        return build_hamiltonian(self.scenario, name)

    def grid_for(self, F):
        return hofer.OscillationGrid.for_hamiltonian(F, self.resolution, self.time_nodes)

    def length(self, F):
        if F.support is None:
            return hofer.length(F)
        return hofer.length(F, self.grid_for(F))

    def isotopy(self, P, F):
        return flows.Isotopy(P, F, self.spec)

    def samples(self, n, count, half_width=2.0, offset=0):
        u = qmc.Halton(d=n, scramble=True, seed=(self.seed + offset) % 2**32).random(count)
        return half_width * (2.0 * u - 1.0)


def _result(status, value=None, lower=None, upper=None, witness=None, margin=None,
            grid=None, **diagnostics):
    return {"status": status, "value": value, "lower": lower, "upper": upper,
            "witness_params": witness, "margin": margin, "grid": grid,
            "diagnostics": diagnostics}


def _judge(value, exp, tol):
    """``pass``/``fail`` against ``expect`` if given, else ``pass``."""
    if "expect" not in exp:
        return "pass"
    tol = float(exp.get("tol", tol))
    err = float(np.max(np.abs(np.asarray(value, dtype=float) - np.asarray(exp["expect"]))))
    return "pass" if err <= tol else "fail"


def _below(value, tol):
    return "pass" if value < tol else "fail"


def _point(exp, key="point"):
    return np.asarray(exp[key], dtype=float)


def _function(exp, key, n):
    return poisson.as_function(str(exp[key]), n)


# -- poisson-core ----------------------------------------------------------------------------


def op_sharp(ctx, exp):
    P = ctx.structure(exp)
    v = poisson.sharp(P, _point(exp), _point(exp, "covector"))
    return _result(_judge(v, exp, 1e-12), value=v)


def op_bracket(ctx, exp):
    P = ctx.structure(exp)
    n = P.dimension
    x = _point(exp)
    v = poisson.bracket(P, _function(exp, "f", n), _function(exp, "h", n), x)
    anti = poisson.bracket(P, _function(exp, "h", n), _function(exp, "f", n), x)
    return _result(_judge(v, exp, 1e-8), value=v, antisymmetry=abs(v + anti))


def op_hamiltonian_field(ctx, exp):
    P = ctx.structure(exp)
    v = poisson.hamiltonian_field(P, _function(exp, "f", P.dimension), _point(exp))
    return _result(_judge(v, exp, 1e-8), value=v)


def op_jacobi_residual(ctx, exp):
    """Largest Jacobi residual on sampled points of ``[-2, 2]^n``.

    ``expect_valid = false`` turns the op into a negative control that passes
    when the residual exceeds ``violation`` (default 1e-3).
    """
    P = ctx.structure(exp)
    n = P.dimension
    X = ctx.samples(n, int(exp.get("samples", 1000)), float(exp.get("half_width", 2.0)))
    if all(k in exp for k in ("f", "g", "h")):
        res = poisson.jacobi_residual(P, *(_function(exp, k, n) for k in "fgh"), X)
    else:
        res = poisson.coordinate_jacobi_residual(P, X)
    worst = float(np.max(res))
    if exp.get("expect_valid", True):
        status = _below(worst, float(exp.get("tol", 1e-9)))
    else:
        status = "pass" if worst > float(exp.get("violation", 1e-3)) else "fail"
    return _result(status, value=worst, samples=len(X))


def op_leaf_at(ctx, exp):
    P = ctx.structure(exp)
    leaf = poisson.leaf_at(P, _point(exp))
    value = {"dimension": leaf.dimension, "sigma": leaf.sigma, "proper": leaf.proper}
    status = "pass"
    if "expect_dimension" in exp and leaf.dimension != int(exp["expect_dimension"]):
        status = "fail"
    if leaf.dimension > 0:
        ident = leaf.sigma @ leaf.restricted_bivector
        err = float(np.max(np.abs(ident - np.eye(leaf.dimension))))
        if err >= 1e-10:
            status = "fail"
        return _result(status, value=value, inverse_residual=err)
    return _result(status, value=value)


def op_restrict_to_leaf(ctx, exp):
    """``F_L(t, u)`` against ``F(t, embed(u))`` on leaf points, plus the support trace."""
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    leaf = poisson.leaf_at(P, _point(exp))
    FL = poisson.restrict_to_leaf(F, leaf)
    U = ctx.samples(leaf.dimension, int(exp.get("samples", 64)), float(exp.get("half_width", 2.0)))
    times = np.linspace(F.t_span[0], F.t_span[1], 5)
    err = max(float(np.max(np.abs(FL.value(t, U) - F.value(t, leaf.embed(U))))) for t in times)
    return _result(_below(err, 1e-12), value=err, leaf_dimension=leaf.dimension,
                   leaf_support=FL.support.to_list() if FL.support is not None else None)


# -- flows -------------------------------------------------------------------------------------


def op_integrate(ctx, exp):
    """Trajectory of ``start`` at the listed times, with Casimir drift."""
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    iso = ctx.isotopy(P, F)
    times = np.atleast_1d(np.asarray(exp.get("times", [F.t_span[1]]), dtype=float))
    traj = iso.trajectory(times, _point(exp, "start"))
    drift = 0.0
    for cas in P.casimirs:
        c0 = cas.value(_point(exp, "start")[None])[0]
        drift = max(drift, float(np.max(np.abs(cas.value(traj) - c0))))
    status = _judge(traj, exp, 1e-8)
    if drift >= 1e-8:
        status = "fail"
    return _result(status, value=traj, casimir_drift=drift, steps_spec=ctx.spec.method)


def _flow_points(ctx, exp, F, H=None):
    box = F.support if H is None or H.support is None else F.support.union(H.support)
    n = F.dimension
    u = qmc.Halton(d=n, scramble=True, seed=ctx.seed % 2**32).random(int(exp.get("samples", 50)))
    return box.low + u * box.widths


def op_compose(ctx, exp):
    """``phi_{F#H}^1`` against ``phi_F^1 o phi_H^1`` and the triangle inequality."""
    P = ctx.structure(exp)
    F, H = ctx.hamiltonian(exp["hamiltonian"]), ctx.hamiltonian(exp["other"])
    C = flows.compose(P, F, H)
    X = _flow_points(ctx, exp, F, H)
    lhs = ctx.isotopy(P, C).endpoint()(X)
    rhs = ctx.isotopy(P, F).endpoint()(ctx.isotopy(P, H).endpoint()(X))
    err = float(np.max(np.abs(lhs - rhs)))
    status = _below(err, float(exp.get("tol", FLOW_TOL)))
    out = {"flow_residual": err}
    if exp.get("lengths", False):
        lc, lf, lh = ctx.length(C), ctx.length(F), ctx.length(H)
        out.update(length=lc, length_sum=lf + lh)
        if lc > lf + lh + LENGTH_TOL:
            status = "fail"
    return _result(status, value=err, grid=ctx.grid if exp.get("lengths") else None, **out)


def op_inverse(ctx, exp):
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    I = flows.inverse(P, F)
    X = _flow_points(ctx, exp, F)
    back = ctx.isotopy(P, I).endpoint()(ctx.isotopy(P, F).endpoint()(X))
    err = float(np.max(np.abs(back - X)))
    status = _below(err, float(exp.get("tol", FLOW_TOL)))
    out = {"flow_residual": err}
    if exp.get("lengths", False):
        diff = abs(ctx.length(I) - ctx.length(F))
        out["length_difference"] = diff
        if diff >= LENGTH_TOL:
            status = "fail"
    return _result(status, value=err, grid=ctx.grid if exp.get("lengths") else None, **out)


def op_pullback(ctx, exp):
    """``phi_{f*F}^1`` against ``f^-1 o phi_F^1 o f`` with ``f`` a stored endpoint."""
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    f = ctx.isotopy(P, ctx.hamiltonian(exp["diffeomorphism"])).endpoint()
    Pb = flows.pullback(f, F)
    X = _flow_points(ctx, exp, Pb)
    lhs = ctx.isotopy(P, Pb).endpoint()(X)
    rhs = f.inverse(ctx.isotopy(P, F).endpoint()(f(X)))
    err = float(np.max(np.abs(lhs - rhs)))
    status = _below(err, float(exp.get("tol", FLOW_TOL)))
    out = {"flow_residual": err}
    if exp.get("lengths", False):
        diff = abs(ctx.length(Pb) - ctx.length(F))
        out["length_difference"] = diff
        if diff >= LENGTH_TOL:
            status = "fail"
    return _result(status, value=err, grid=ctx.grid if exp.get("lengths") else None, **out)


def _time_function(text):
    prof = Profile(str(text))
    return lambda t: prof(np.asarray(t, dtype=float))


def op_reparametrize(ctx, exp):
    """Endpoint and length of ``F^sigma`` against ``F``."""
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    Fs = flows.reparametrize(F, _time_function(exp["sigma"]), _time_function(exp["dsigma"]))
    X = _flow_points(ctx, exp, F)
    err = float(np.max(np.abs(ctx.isotopy(P, Fs).endpoint()(X) - ctx.isotopy(P, F).endpoint()(X))))
    diff = abs(ctx.length(Fs) - ctx.length(F))
    ok = err < FLOW_TOL and diff < LENGTH_TOL
    return _result("pass" if ok else "fail", value=diff, grid=ctx.grid, flow_residual=err)


def op_flatten_boundary(ctx, exp):
    """Endpoint, stationarity on ``[0, delta]`` and length of the flattened isotopy."""
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    delta = float(exp.get("delta", 0.1))
    Fh = flows.flatten_boundary(F, delta)
    X = _flow_points(ctx, exp, F)
    iso = ctx.isotopy(P, Fh)
    end = float(np.max(np.abs(iso.endpoint()(X) - ctx.isotopy(P, F).endpoint()(X))))
    still = float(np.max(np.abs(iso.evaluate(0.5 * delta, X) - X)))
    diff = abs(ctx.length(Fh) - ctx.length(F))
    ok = end < FLOW_TOL and still < FLOW_TOL and diff < LENGTH_TOL
    return _result("pass" if ok else "fail", value=diff, grid=ctx.grid, endpoint_residual=end,
                   stationary_residual=still)


# -- hofer ----------------------------------------------------------------------------------


def op_oscillation(ctx, exp):
    F = ctx.hamiltonian(exp["hamiltonian"])
    v = hofer.oscillation(F, ctx.grid_for(F), t=float(exp.get("t", 0.0)))
    return _result(_judge(v, exp, 1e-6), value=v, grid=ctx.grid)


def op_length(ctx, exp):
    F = ctx.hamiltonian(exp["hamiltonian"])
    v = ctx.length(F)
    return _result(_judge(v, exp, 1e-6), value=v, grid=ctx.grid)


def _sampler(ctx, exp):
    return Sampler(lattice=int(exp.get("lattice", 33)), seed=ctx.seed % 2**32)


def op_check_displaced(ctx, exp):
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    chk = hofer.check_displaced(ctx.isotopy(P, F).endpoint(), as_region(exp["region"]),
                                _sampler(ctx, exp))
    if exp.get("expect_displaced", True):
        status = "pass" if chk.verified else ("inconclusive" if chk.displaced else "fail")
    else:
        status = "fail" if chk.displaced else "pass"
    return _result(status, value=chk.status, margin=chk.margin, cell=chk.cell,
                   samples=chk.samples)


def _budget(exp):
    keys = ("starts", "maxfev", "seed_grid", "xatol", "fatol")
    return hofer.SearchBudget(**{k: exp["budget"][k] for k in keys if k in exp.get("budget", {})})


def _search(ctx, exp):
    """Displacement search, shared between experiments with the same setup."""
    P = ctx.structure(exp)
    U = as_region(exp["region"])
    name = exp.get("family", "translation")
    key = (P.label, repr(U), name, repr(_budget(exp)), int(exp.get("lattice", 33)))
    with ctx._lock:
        if key not in ctx._searches:
            X = hofer.DisplacementExperiment(P, U, hofer.FAMILIES[name](P, U), _budget(exp),
                                             _sampler(ctx, exp), ctx.resolution,
                                             ctx.time_nodes, ctx.spec)
            hofer.displacement_upper_bound(X)
            ctx._searches[key] = X
    return ctx._searches[key]


def op_displacement_upper_bound(ctx, exp):
    X = _search(ctx, exp)
    est = X.result
    if exp.get("expect_infinite", False):
        status = "pass" if not est.finite else "fail"
    else:
        status = "pass" if est.finite else "inconclusive"
        if est.finite and "within" in exp:
            lo, hi = exp["within"]
            status = "pass" if lo <= est.upper <= hi else "fail"
    return _result(status, value=est.upper, lower=est.lower, upper=est.upper,
                   witness=est.witness, margin=est.margin, grid=ctx.grid,
                   evaluations=est.evaluations, notes=est.notes)


def op_gromov_width_lower(ctx, exp):
    P = ctx.structure(exp)
    U = as_region(exp["region"])
    leaf = poisson.leaf_at(P, _point(exp, "leaf_point")) if "leaf_point" in exp else None
    v = hofer.gromov_width_lower(U, None if leaf is not None else P, leaf)
    return _result(_judge(v, exp, 1e-12), value=v)


def op_energy_capacity_check(ctx, exp):
    X = _search(ctx, exp)
    rep = hofer.energy_capacity_check(X)
    return _result("pass" if rep.holds else "fail", value=rep.holds, lower=rep.lower,
                   upper=rep.upper, witness=X.result.witness, margin=X.result.margin,
                   grid=ctx.grid)


def op_leaf_restriction_check(ctx, exp):
    P = ctx.structure(exp)
    F = ctx.hamiltonian(exp["hamiltonian"])
    leaf = poisson.leaf_at(P, _point(exp))
    rep = hofer.leaf_restriction_check(F, leaf, ctx.resolution, ctx.time_nodes)
    return _result("pass" if rep.holds else "fail", value=rep.leaf_length,
                   upper=rep.ambient_length, grid=ctx.grid)


# -- groupoid -----------------------------------------------------------------------------------


def op_realization(ctx, exp):
    R = groupoid.get_realization(exp["realization"])
    rep = groupoid.check_realization(R, int(exp.get("samples", 200)), ctx.seed % 2**32)
    base = groupoid.check_base_bracket(R, int(exp.get("samples", 200)), ctx.seed % 2**32)
    worst = max(rep.source_morphism, rep.target_antimorphism, base)
    ok = rep.passed and base < groupoid.RESIDUAL_TOL
    return _result("pass" if ok else "fail", value=worst, unit_source=rep.unit_source,
                   unit_target=rep.unit_target, source_morphism=rep.source_morphism,
                   target_antimorphism=rep.target_antimorphism, base_bracket=base,
                   jacobi=rep.jacobi)


def _base_hamiltonian(ctx, exp, R):
    F = ctx.hamiltonian(exp["hamiltonian"])
    if F.structure != R.base.label:
        raise ValueError(f"hamiltonian lives on {F.structure!r}, realization base is "
                         f"{R.base.label!r}")
    return F


def op_lift_projection(ctx, exp):
    """``s o phi~^t = phi^t o s`` on sampled ``(t, g)``; the lift length is the base length."""
    R = groupoid.get_realization(exp["realization"])
    F = _base_hamiltonian(ctx, exp, R)
    rep = groupoid.check_projection(R, F, int(exp.get("samples", 100)), ctx.spec,
                                    ctx.seed % 2**32)
    lift = groupoid.lift_hamiltonian(R, F)
    same = hofer.length(lift) == hofer.length(F)
    return _result("pass" if rep.passed and same else "fail", value=rep.residual,
                   samples=rep.samples, lift_length_is_base_length=same)


def op_target_fiber(ctx, exp):
    R = groupoid.get_realization(exp["realization"])
    F = _base_hamiltonian(ctx, exp, R)
    rep = groupoid.check_target_fibers(R, F, int(exp.get("samples", 100)), ctx.spec,
                                       ctx.seed % 2**32)
    return _result("pass" if rep.passed else "fail", value=rep.residual, samples=rep.samples)


def op_cutoff_displacement(ctx, exp):
    """The cutoff Hamiltonian displaces a ball ``B`` in ``s^-1(U)`` with ``c(B)/2 <= l(F^lam) <= l(F)``."""
    R = groupoid.get_realization(exp["realization"])
    F = _base_hamiltonian(ctx, exp, R)
    B = Ball(exp["ball"]["center"], exp["ball"]["radius"])
    if "cutoff" in exp:
        cut = groupoid.CutoffSpec(Box(*map(tuple, exp["cutoff"]["inner"])),
                                  Box(*map(tuple, exp["cutoff"]["outer"])))
    else:
        inner = B.bounding_box
        cut = groupoid.CutoffSpec(inner, inner.inflate(float(exp.get("cutoff_margin", 0.25))))
    Fl = groupoid.cutoff_hamiltonian(R, F, cut)
    chk = hofer.check_displaced(ctx.isotopy(R.total, Fl).endpoint(), B,
                                _sampler(ctx, {"lattice": exp.get("lattice", 9)}))
    lower = 0.5 * hofer.gromov_width_lower(B, R.total)
    ell = ctx.length(Fl)
    ell_base = ctx.length(F)
    ok = chk.verified and lower <= ell <= ell_base + LENGTH_TOL
    return _result("pass" if ok else "fail", value=ell, lower=lower, upper=ell_base,
                   margin=chk.margin, grid=ctx.grid, displaced=chk.status, cell=chk.cell)


OPERATIONS = {
    "sharp": op_sharp,
    "bracket": op_bracket,
    "hamiltonian_field": op_hamiltonian_field,
    "jacobi_residual": op_jacobi_residual,
    "leaf_at": op_leaf_at,
    "restrict_to_leaf": op_restrict_to_leaf,
    "integrate": op_integrate,
    "compose": op_compose,
    "inverse": op_inverse,
    "pullback": op_pullback,
    "reparametrize": op_reparametrize,
    "flatten_boundary": op_flatten_boundary,
    "oscillation": op_oscillation,
    "length": op_length,
    "check_displaced": op_check_displaced,
    "displacement_upper_bound": op_displacement_upper_bound,
    "gromov_width_lower": op_gromov_width_lower,
    "energy_capacity_check": op_energy_capacity_check,
    "leaf_restriction_check": op_leaf_restriction_check,
    "realization": op_realization,
    "lift_projection": op_lift_projection,
    "target_fiber": op_target_fiber,
    "cutoff_displacement": op_cutoff_displacement,
}

# library operations exercised by each experiment op (beyond its own name)
COVERAGE = {
    "realization": ("pair_groupoid", "cotangent_heisenberg"),
    "lift_projection": ("lift_hamiltonian", "check_projection", "integrate"),
    "target_fiber": ("lift_hamiltonian", "check_target_fibers"),
    "cutoff_displacement": ("cutoff_hamiltonian", "check_displaced", "length",
                            "gromov_width_lower"),
    "compose": ("integrate",),
    "inverse": ("integrate",),
    "pullback": ("integrate",),
    "energy_capacity_check": ("displacement_upper_bound", "gromov_width_lower"),
    "leaf_restriction_check": ("restrict_to_leaf", "leaf_at", "length"),
}


def covered(op, exp=None):
    """Library operations reached by one experiment."""
    out = {op, *COVERAGE.get(op, ())}
    if op == "realization" and exp is not None:
        out = {op, "pair_groupoid" if exp["realization"].startswith("pair:")
               else "cotangent_heisenberg"}
    return out


__all__ = ["COVERAGE", "Context", "OPERATIONS", "covered"]
