"""Bundled invariant suites, one per area, printed as pass/fail tables.

Every check is deterministic given the seed, and the table carries no
timings, so repeated runs print identical bytes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .. import flows, groupoid, hamiltonians as hm, hofer, poisson
from ..hamiltonians import Box
from ..sampling import Ball, Sampler

SUITES = ("axioms", "flows", "groupoid", "energy")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    bound: float

    def row(self):
        status = "pass" if self.passed else "FAIL"
        return f"{self.suite:<9} {self.name:<44} {status:<5} {self.value: .6e} {self.bound: .1e}"


def random_hamiltonian(P, rng, compact_half_width=1.5):
    """A random built-in family instance on ``P`` with a smooth time profile."""
    n, label = P.dimension, P.label
    kind = rng.integers(4)
    a, b = rng.uniform(0.5, 1.5, 2)
    profile = f"{a:.3f} + {0.5 * b:.3f}*sin({1 + kind}*t)"
    plateau = hm.default_plateau(n, compact_half_width, compact_half_width + 0.75)
    if kind == 0:
        return hm.bump(label, rng.uniform(-0.5, 0.5, n), rng.uniform(0.6, 1.2),
                       rng.uniform(-0.6, 0.6), profile)
    if kind == 1:
        return hm.coordinate_plateau(n, label, int(rng.integers(n)), rng.uniform(-0.7, 0.7),
                                     plateau, profile)
    if kind == 2:
        c = rng.uniform(-0.3, 0.3, n)
        return hm.rotation(label, c, rng.uniform(-1.0, 1.0), plateau, profile)
    i, j = rng.choice(n, 2, replace=False)
    text = f"{rng.uniform(0.2, 0.6):.3f}*sin(x{i + 1})*x{j + 1}"
    return hm.custom(label, n, text, plateau, profile)


def _points(rng, n, count, half_width=1.0):
    return rng.uniform(-half_width, half_width, (count, n))


# -- axioms: Poisson axioms, pseudo-norm inequalities, reparametrizations ---------------------


def _axioms(rng):
    out = []
    for label in ("symplectic2n:1", "symplectic2n:2", "heisenberg3", "product2x1"):
        P = poisson.get_structure(label)
        res = float(np.max(poisson.coordinate_jacobi_residual(P, _points(rng, P.dimension, 200, 2.0))))
        out.append((f"jacobi {label}", res < 1e-9, res, 1e-9))
    ctrl = poisson.nonpoisson_control()
    res = float(np.min(poisson.coordinate_jacobi_residual(ctrl, _points(rng, 3, 200, 2.0))))
    out.append(("jacobi negative control exceeds", res > 1e-3, res, 1e-3))
    P = poisson.standard_symplectic(1)
    for k in range(3):
        F, H = random_hamiltonian(P, rng), random_hamiltonian(P, rng)
        lf, lh = hofer.length(F), hofer.length(H)
        lc = hofer.length(flows.compose(P, F, H))
        out.append((f"triangle pair {k}", lc <= lf + lh + 1e-6, lc - lf - lh, 1e-6))
        li = hofer.length(flows.inverse(P, F))
        out.append((f"inverse symmetry {k}", abs(li - lf) < 1e-6, abs(li - lf), 1e-6))
        f = flows.integrate(P, H).endpoint()
        lp = hofer.length(flows.pullback(f, F))
        out.append((f"pullback invariance {k}", abs(lp - lf) < 1e-6, abs(lp - lf), 1e-6))
    F = random_hamiltonian(P, rng)
    base = hofer.length(F)
    sigmas = {
        "t^2": (lambda t: t**2, lambda t: 2 * t),
        "(1-cos pi t)/2": (lambda t: 0.5 * (1 - np.cos(np.pi * t)),
                           lambda t: 0.5 * np.pi * np.sin(np.pi * t)),
    }
    for name, (s, ds) in sigmas.items():
        diff = abs(hofer.length(flows.reparametrize(F, s, ds)) - base)
        out.append((f"reparametrized length {name}", diff < 1e-6, diff, 1e-6))
    diff = abs(hofer.length(flows.flatten_boundary(F, 0.1)) - base)
    out.append(("flattened length", diff < 1e-6, diff, 1e-6))
    return out


# -- flows: oracles and conservation ------------------------------------------------------------


def _flows(rng):
    out = []
    P = poisson.standard_symplectic(1)
    iso = flows.integrate(P, hm.coordinate_plateau(2, P.label, 1))
    err = float(np.max(np.abs(iso.evaluate(1.0, np.zeros(2)) - [-1.0, 0.0])))
    out.append(("translation closed form", err < 1e-8, err, 1e-8))
    Hs = poisson.heisenberg3()
    c = 0.7
    iso = flows.integrate(Hs, hm.coordinate_plateau(3, Hs.label, 0))
    times = np.array([0.25, 0.5, 1.0])
    traj = iso.trajectory(times, [0.0, 0.0, c])
    exact = np.stack([np.zeros(3), c * times, np.full(3, c)], axis=-1)
    err = float(np.max(np.abs(traj - exact)))
    out.append(("heisenberg linear flow", err < 1e-8, err, 1e-8))
    for label in ("heisenberg3", "product2x1"):
        Q = poisson.get_structure(label)
        drift = 0.0
        for _ in range(5):
            F = random_hamiltonian(Q, rng)
            X = _points(rng, 3, 20)
            Y = flows.integrate(Q, F).evaluate(1.0, X)
            drift = max(drift, float(np.max(np.abs(Y[:, 2] - X[:, 2]))))
        out.append((f"casimir drift {label}", drift < 1e-8, drift, 1e-8))
    worst = 0.0
    for _ in range(5):
        S = hm.separable(random_hamiltonian(P, rng).terms[0][1], P.label)
        X = _points(rng, 2, 20)
        Y = flows.integrate(P, S).evaluate(1.0, X)
        worst = max(worst, float(np.max(np.abs(S.value(0.0, Y) - S.value(0.0, X)))))
    out.append(("autonomous energy conservation", worst < 1e-7, worst, 1e-7))
    F = hm.bump(P.label, [0.1, -0.1], 0.9, 0.3, "1 + 0.3*sin(t)")
    H = hm.bump(P.label, [-0.2, 0.2], 0.8, -0.25, "cos(t)")
    X = _points(rng, 2, 20)
    phiF, phiH = flows.integrate(P, F).endpoint(), flows.integrate(P, H).endpoint()
    err = float(np.max(np.abs(flows.integrate(P, flows.compose(P, F, H)).evaluate(1.0, X)
                              - phiF(phiH(X)))))
    out.append(("composition endpoint", err < 1e-6, err, 1e-6))
    err = float(np.max(np.abs(flows.integrate(P, flows.inverse(P, F)).evaluate(1.0, phiF(X)) - X)))
    out.append(("inverse endpoint", err < 1e-6, err, 1e-6))
    return out


# -- groupoid: realizations, projection, target fibers ---------------------------------------------


def _groupoid(rng):
    out = []
    seed = int(rng.integers(2**31))
    for R in (groupoid.pair_groupoid(poisson.standard_symplectic(1)),
              groupoid.cotangent_heisenberg()):
        rep = groupoid.check_realization(R, 200, seed)
        out.append((f"s morphism {R.label}", rep.source_morphism < 1e-6, rep.source_morphism, 1e-6))
        out.append((f"t anti-morphism {R.label}", rep.target_antimorphism < 1e-6,
                    rep.target_antimorphism, 1e-6))
        out.append((f"units {R.label}", max(rep.unit_source, rep.unit_target) < 1e-12,
                    max(rep.unit_source, rep.unit_target), 1e-12))
        out.append((f"total jacobi {R.label}", rep.jacobi < 1e-9, rep.jacobi, 1e-9))
        base = groupoid.check_base_bracket(R, 200, seed)
        out.append((f"base bracket through s {R.label}", base < 1e-6, base, 1e-6))
        proj = fib = 0.0
        for _ in range(3):
            F = random_hamiltonian(R.base, rng)
            proj = max(proj, groupoid.check_projection(R, F, 50, seed=seed).residual)
            fib = max(fib, groupoid.check_target_fibers(R, F, 50, seed=seed).residual)
        out.append((f"projection {R.label}", proj < 1e-6, proj, 1e-6))
        out.append((f"target fibers {R.label}", fib < 1e-6, fib, 1e-6))
    return out


# -- energy: displacement and capacities --------------------------------------------------------------


def _energy(rng):
    out = []
    P = poisson.standard_symplectic(1)
    U = Ball((0.0, 0.0), 0.5)
    X = hofer.DisplacementExperiment(P, U, hofer.translation_family(P, U))
    est = hofer.displacement_upper_bound(X)
    ok = est.finite and 0.3927 <= est.upper <= 1.1 and (est.margin or 0.0) > 0.01
    out.append(("disk r=0.5 upper bound in box", ok, est.upper, 1.1))
    rep = hofer.energy_capacity_check(X)
    out.append(("energy-capacity inequality", rep.holds, rep.upper - rep.lower, 0.0))
    width = hofer.gromov_width_lower(Ball((0.0, 0.0, 0.7), 0.4),
                                     leaf=poisson.leaf_at(poisson.heisenberg3(), [0, 0, 0.7]))
    err = abs(width - np.pi * 0.16 / 0.7)
    out.append(("heisenberg leaf width", err < 1e-12, err, 1e-12))
    worst = -math.inf
    for label in ("heisenberg3", "product2x1"):
        Q = poisson.get_structure(label)
        for _ in range(3):
            F = random_hamiltonian(Q, rng)
            x = rng.uniform(-0.5, 0.5, 3)
            x[2] = rng.uniform(0.3, 1.2)
            rep = hofer.leaf_restriction_check(F, poisson.leaf_at(Q, x))
            worst = max(worst, rep.leaf_length - rep.ambient_length)
    out.append(("leaf length <= ambient length", worst <= 1e-12, worst, 1e-12))
    R = groupoid.pair_groupoid(P)
    F = hofer.translation_family(P, U).build([1.2, 0.1])
    inner = Box.cube(0.5, 4)
    Fl = groupoid.cutoff_hamiltonian(R, F, groupoid.CutoffSpec(inner, inner.inflate(0.25)))
    B = Ball((0.0,) * 4, 0.5)
    chk = hofer.check_displaced(flows.integrate(R.total, Fl).endpoint(), B, Sampler(lattice=9))
    out.append(("cutoff lift displaces ball", chk.verified, chk.margin, chk.cell))
    ell, ell_base = hofer.length(Fl), hofer.length(F)
    half_c = 0.5 * hofer.gromov_width_lower(B, R.total)
    out.append(("c(B)/2 <= l(F^lam) <= l(F)", half_c <= ell <= ell_base + 1e-6,
                ell - ell_base, 1e-6))
    return out


_BUILDERS = {"axioms": _axioms, "flows": _flows, "groupoid": _groupoid, "energy": _energy}


def run_suite(name, seed=0):
    if name not in _BUILDERS:
        raise KeyError(name)
    rng = np.random.default_rng(seed)
    return [CheckResult(name, n, bool(ok), float(v), float(b))
            for n, ok, v, b in _BUILDERS[name](rng)]


def format_table(results):
    lines = [f"{'suite':<9} {'check':<44} {'':<5} {'value':>13} {'bound':>8}"]
    lines += [r.row() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"


__all__ = ["CheckResult", "SUITES", "format_table", "random_hamiltonian", "run_suite"]
