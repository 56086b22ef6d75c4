"""Symplectic groupoid charts over Poisson manifolds and lifted Hamiltonians.

A realization is a symplectic Poisson structure on a total chart together
with source and target maps onto the base and the unit embedding.  Both
built-ins have a source map that is a coordinate projection, so the lift
``F o s`` has an exact gradient and Hessian.

The lifted flow of ``F o s`` projects onto the base flow through ``s`` and
keeps ``t`` fixed.  The cutoff Hamiltonian

    F^lam(t, x) = lam((phi~^t)^-1 (x)) * F(t, s(x))

is compactly supported and agrees with the lift wherever the pulled-back
cutoff is 1.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import calculus, poisson
from .errors import ContractViolation
from .flows import INNER_SPEC, Isotopy
from .hamiltonians import Box, Plateau, TimeDependentHamiltonian, as_box
from .integrators import IntegratorSpec

RESIDUAL_TOL = 1e-6
SAMPLE_HALF_WIDTH = 1.0


@dataclass(frozen=True)
class GroupoidRealization:
    """``s, t: G -> M`` on a global chart of ``G``.

    ``source_axes`` are the total-chart coordinates that ``s`` projects onto.
    ``fiber_axes`` are coordinates that every lifted flow leaves fixed and
    that no lifted field depends on; they let pulled-back cutoffs be computed
    once per distinct remaining coordinate.
    """

    label: str
    base: poisson.PoissonStructure
    total: poisson.PoissonStructure
    source_axes: tuple
    target: Callable = field(repr=False)
    target_jacobian: Callable = field(repr=False)
    unit: Callable = field(repr=False)
    fiber_axes: tuple = ()
    description: str = ""

    @property
    def dimension(self):
        return self.total.dimension

    @property
    def moving_axes(self):
        return tuple(i for i in range(self.dimension) if i not in self.fiber_axes)

    def source(self, X):
        return calculus.as_points(X)[:, list(self.source_axes)]

    def source_jacobian(self, X):
        X = calculus.as_points(X)
        D = np.zeros((self.base.dimension, self.dimension))
        D[np.arange(self.base.dimension), list(self.source_axes)] = 1.0
        return np.broadcast_to(D, (len(X),) + D.shape)

    def samples(self, count, seed=0, half_width=SAMPLE_HALF_WIDTH):
        """Seeded scrambled Halton points of the cube ``[-w, w]`` in the total chart."""
        u = qmc.Halton(d=self.dimension, scramble=True, seed=seed).random(count)
        return half_width * (2.0 * u - 1.0)


def pair_groupoid(P):
    """``M x M`` with ``s(p, q) = q``, ``t(p, q) = p`` and ``u(x) = (x, x)``.

    The total bivector is ``-Lambda`` on the ``p`` factor and ``Lambda`` on
    the ``q`` factor, which makes ``s`` a Poisson map and ``t`` an
    anti-Poisson map.
    """
    if not P.symplectic:
        raise ContractViolation(f"the pair groupoid needs a symplectic base, got {P.label}")
    n = P.dimension
    L = P.matrix(np.zeros((1, n)))[0]
    Z = np.zeros((n, n))
    total_matrix = np.block([[-L, Z], [Z, L]])
    biv, jac = poisson._constant(total_matrix)
    label = f"pair:{P.label}"
    total = poisson.PoissonStructure(label, 2 * n, biv, jac, leaf_axes=tuple(range(2 * n)),
                                     constant=True, symplectic=True,
                                     description=f"pair groupoid of {P.label}")

    def target(X):
        return calculus.as_points(X)[:, :n]

    def target_jacobian(X):
        D = np.concatenate([np.eye(n), np.zeros((n, n))], axis=1)
        return np.broadcast_to(D, (len(calculus.as_points(X)), n, 2 * n))

    def unit(X):
        X = calculus.as_points(X)
        return np.concatenate([X, X], axis=1)

    return GroupoidRealization(label, P, total, tuple(range(n, 2 * n)), target,
                               target_jacobian, unit, fiber_axes=tuple(range(n)),
                               description=f"pair groupoid M x M over {P.label}")


def _heisenberg_total():
    """Left-trivialized cotangent bracket on ``(a, b, c, mu1, mu2, mu3)``.

    Group law ``(a, b, c)(a', b', c') = (a + a', b + b', c + c' + a b')``;
    ``{mu_i, g}`` are the left-invariant vector fields and ``{mu1, mu2} = mu3``.
    """

    def bivector(X):
        L = np.zeros((len(X), 6, 6))
        L[:, 0, 3] = -1.0
        L[:, 1, 4] = -1.0
        L[:, 2, 4] = -X[:, 0]
        L[:, 2, 5] = -1.0
        L[:, 3, 4] = X[:, 5]
        return L - np.transpose(L, (0, 2, 1))

    def jacobian(X):
        J = np.zeros((len(X), 6, 6, 6))
        J[:, 2, 4, 0], J[:, 4, 2, 0] = -1.0, 1.0
        J[:, 3, 4, 5], J[:, 4, 3, 5] = 1.0, -1.0
        return J

    return poisson.PoissonStructure("cotangent:heisenberg3", 6, bivector, jacobian,
                                    leaf_axes=tuple(range(6)), symplectic=True,
                                    description="T*H, left trivialization")


def cotangent_heisenberg():
    """``T*H => h*`` with ``s(g, mu) = mu`` and ``t(g, mu) = Ad*_g mu``.

    For ``g = (a, b, c)`` the coadjoint action is
    ``(mu1 + b mu3, mu2 - a mu3, mu3)``; the central component is invariant.
    """
    base = poisson.heisenberg3()
    total = _heisenberg_total()

    def target(X):
        X = calculus.as_points(X)
        a, b = X[:, 0], X[:, 1]
        mu1, mu2, mu3 = X[:, 3], X[:, 4], X[:, 5]
        return np.stack([mu1 + b * mu3, mu2 - a * mu3, mu3], axis=-1)

    def target_jacobian(X):
        X = calculus.as_points(X)
        D = np.zeros((len(X), 3, 6))
        D[:, 0, 1], D[:, 0, 3], D[:, 0, 5] = X[:, 5], 1.0, X[:, 1]
        D[:, 1, 0], D[:, 1, 4], D[:, 1, 5] = -X[:, 5], 1.0, -X[:, 0]
        D[:, 2, 5] = 1.0
        return D

    def unit(X):
        X = calculus.as_points(X)
        return np.concatenate([np.zeros((len(X), 3)), X], axis=1)

    return GroupoidRealization("cotangent:heisenberg3", base, total, (3, 4, 5), target,
                               target_jacobian, unit,
                               description="cotangent groupoid of the Heisenberg group")


REALIZATIONS = {
    "cotangent:heisenberg3": cotangent_heisenberg,
}


def get_realization(label):
    """``pair:<symplectic label>`` or a built-in name."""
    if label in REALIZATIONS:
        return REALIZATIONS[label]()
    if label.startswith("pair:"):
        return pair_groupoid(poisson.get_structure(label[len("pair:"):]))
    raise ContractViolation(f"unknown groupoid realization {label!r}")


# -- structural checks -------------------------------------------------------------------


@dataclass(frozen=True)
class RealizationReport:
    unit_source: float
    unit_target: float
    source_morphism: float
    target_antimorphism: float
    jacobi: float
    samples: int

    @property
    def passed(self):
        return (max(self.unit_source, self.unit_target) < 1e-12
                and max(self.source_morphism, self.target_antimorphism) < RESIDUAL_TOL
                and self.jacobi < 1e-9)


def pushed_bivector(R, X, which="source"):
    """``D f Pi D f^T`` at ``X`` for ``f = s`` or ``t``: the brackets of pulled-back coordinates."""
    X = calculus.as_points(X)
    D = R.source_jacobian(X) if which == "source" else R.target_jacobian(X)
    return np.einsum("mai,mij,mbj->mab", D, R.total.matrix(X), D)


def check_realization(R, samples=200, seed=0, jacobi_samples=None):
    """Unit sections, Poisson (anti-)morphism residuals and the total Jacobi residual."""
    G = R.samples(samples, seed)
    base_pts = G[:, list(R.source_axes)]
    units = R.unit(base_pts)
    unit_s = float(np.max(np.abs(R.source(units) - base_pts)))
    unit_t = float(np.max(np.abs(R.target(units) - base_pts)))
    s_err = pushed_bivector(R, G, "source") - R.base.matrix(R.source(G))
    t_err = pushed_bivector(R, G, "target") + R.base.matrix(R.target(G))
    jac_pts = G if jacobi_samples is None else G[:jacobi_samples]
    jacobi = float(np.max(poisson.coordinate_jacobi_residual(R.total, jac_pts)))
    return RealizationReport(unit_s, unit_t, float(np.max(np.abs(s_err))),
                             float(np.max(np.abs(t_err))), jacobi, samples)


# -- lifts -------------------------------------------------------------------------------


class LiftedHamiltonian(TimeDependentHamiltonian):
    """``(s*F)(t, g) = F(t, s(g))``; not compactly supported.

    Its length is the base length by definition, reported through
    ``base_hamiltonian``.
    """

    def __init__(self, realization, F):
        if F.dimension != realization.base.dimension:
            raise ContractViolation("Hamiltonian and base dimensions differ")
        super().__init__(realization.dimension, realization.total.label, None, F.t_span,
                         f"lift of {F.description or F!r}")
        self.realization = realization
        self.base_hamiltonian = F
        self._axes = list(realization.source_axes)

    def _embed(self, g):
        out = np.zeros(g.shape[:1] + (self.dimension,) + g.shape[2:])
        out[:, self._axes] = g
        return out

    def value(self, t, X):
        return self.base_hamiltonian.value(t, calculus.as_points(X)[:, self._axes])

    def grad(self, t, X):
        return self._embed(self.base_hamiltonian.grad(t, calculus.as_points(X)[:, self._axes]))

    def _embed_hess(self, H):
        out = np.zeros((len(H), self.dimension, self.dimension))
        out[np.ix_(np.arange(len(H)), self._axes, self._axes)] = H
        return out

    def hess(self, t, X):
        return self._embed_hess(self.base_hamiltonian.hess(t, calculus.as_points(X)[:, self._axes]))

    def derivatives(self, t, X):
        g, H = self.base_hamiltonian.derivatives(t, calculus.as_points(X)[:, self._axes])
        return self._embed(g), self._embed_hess(H)

    def moving(self, X):
        return self.base_hamiltonian.moving(calculus.as_points(X)[:, self._axes])


def lift_hamiltonian(R, F):
    if F.structure not in (R.base.label, None):
        raise ContractViolation(f"Hamiltonian lives on {F.structure!r}, not {R.base.label!r}")
    return LiftedHamiltonian(R, F)


@dataclass(frozen=True)
class LiftReport:
    residual: float
    samples: int
    tolerance: float = RESIDUAL_TOL

    @property
    def passed(self):
        return self.residual < self.tolerance


def _sample_pairs(R, F, samples, seed):
    if np.ndim(samples) == 0:
        G = R.samples(int(samples), seed)
    else:
        G = calculus.as_points(samples)
    t0, t1 = F.t_span
    u = qmc.Halton(d=1, scramble=True, seed=seed + 1).random(len(G))[:, 0]
    return G, t0 + (t1 - t0) * u


def lifted_flow(R, F, spec=None):
    return Isotopy(R.total, lift_hamiltonian(R, F), spec)


def check_projection(R, F, samples=100, spec=None, seed=0):
    """``max |s(phi~^t(g)) - phi^t(s(g))|`` over sampled ``(t, g)``."""
    G, T = _sample_pairs(R, F, samples, seed)
    lifted = lifted_flow(R, F, spec)
    base = Isotopy(R.base, F, lifted.spec)
    up = R.source(lifted.transport(G, F.t_span[0], T))
    down = base.transport(R.source(G), F.t_span[0], T)
    return LiftReport(float(np.max(np.abs(up - down), initial=0.0)), len(G))


def check_target_fibers(R, F, samples=100, spec=None, seed=0):
    """``max |t(phi~^t(g)) - t(g)|`` over sampled ``(t, g)``."""
    G, T = _sample_pairs(R, F, samples, seed)
    moved = lifted_flow(R, F, spec).transport(G, F.t_span[0], T)
    return LiftReport(float(np.max(np.abs(R.target(moved) - R.target(G)), initial=0.0)),
                      len(G))


def check_base_bracket(R, samples=200, seed=0):
    """Largest deviation of ``{x_i o s, x_j o s}_G`` from ``{x_i, x_j}_M o s``.

    Brackets on ``G`` are taken with :func:`poisson.bracket` on lifted
    coordinate functions, independently of :func:`pushed_bivector`.
    """
    G = R.samples(samples, seed)
    n, N = R.base.dimension, R.dimension
    L = R.base.matrix(R.source(G))
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            lhs = poisson.bracket(R.total, poisson.coordinate(R.source_axes[i], N),
                                  poisson.coordinate(R.source_axes[j], N), G)
            worst = max(worst, float(np.max(np.abs(lhs - L[:, i, j]))))
    return worst


# -- cutoffs -------------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffSpec:
    """A smooth plateau on the total chart: 1 on ``inner``, 0 outside ``outer``."""

    inner: Box
    outer: Box

    def __post_init__(self):
        inner, outer = as_box(self.inner), as_box(self.outer)
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "outer", outer)
        if inner.dimension != outer.dimension:
            raise ContractViolation("cutoff boxes differ in dimension")
        if np.any(inner.low < outer.low) or np.any(inner.high > outer.high):
            raise ContractViolation("cutoff inner box must lie inside the outer box")

    @property
    def plateau(self):
        return Plateau(self.inner, self.outer)


class CutoffHamiltonian(TimeDependentHamiltonian):
    """``F^lam(t, x) = lam(psi_t(x)) * F(t, s(x))`` with ``psi_t = (phi~^t)^-1``.

    ``psi_t`` is evaluated by backward integration of the lifted flow for each
    call, once per distinct moving part of the point; the gradient uses the
    variational equation on the cutoff's ramp only.
    """

    def __init__(self, realization, F, cutoff, spec=None):
        self.realization = realization
        self.lift = lift_hamiltonian(realization, F)
        self.cutoff = cutoff
        self.lam = cutoff.plateau
        self.isotopy = Isotopy(realization.total, self.lift, spec or INNER_SPEC)
        support, exact = _cutoff_support(realization, F, cutoff, self.isotopy)
        super().__init__(realization.dimension, realization.total.label, support, F.t_span,
                         f"cutoff of {F.description or F!r}")
        self.support_exact = exact

    def pulled_back(self, t, X):
        """``psi_t(X)`` for per-point or shared times."""
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        moving = list(self.realization.moving_axes)
        out = X.copy()
        live = (T != self.t_span[0]) & self.lift.moving(X)
        if not np.any(live):
            return out
        key = np.column_stack([T[live], X[live][:, moving]])
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        reps = np.zeros((len(uniq), self.dimension))
        reps[:, moving] = uniq[:, 1:]
        back = self.isotopy.transport(reps, uniq[:, 0], self.t_span[0])
        rows = out[live]
        rows[:, moving] = back[np.ravel(inv)][:, moving]
        out[live] = rows
        return out

    def value(self, t, X):
        X = calculus.as_points(X)
        F = self.lift.value(t, X)
        out = np.zeros(len(X))
        nz = F != 0.0
        if np.any(nz):
            T = calculus.broadcast_times(t, len(X))[nz]
            out[nz] = self.lam.value(self.pulled_back(T, X[nz])) * F[nz]
        return out

    def grad(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        out = np.zeros(X.shape)
        nz = self.lift.moving(X)
        if not np.any(nz):
            return out
        psi = self.pulled_back(T[nz], X[nz])
        gF = self.lift.grad(T[nz], X[nz])
        grad = self.lam.value(psi)[:, None] * gF
        glam = self.lam.grad(psi)
        ramp = np.any(glam != 0.0, axis=1)
        if np.any(ramp):
            Xr = X[nz][ramp]
            _, D = self.isotopy.transport_jacobian(Xr, T[nz][ramp], self.t_span[0])
            Fr = self.lift.value(T[nz][ramp], Xr)
            grad[ramp] += Fr[:, None] * np.einsum("mij,mi->mj", D, glam[ramp])
        out[nz] = grad
        return out

    def hess(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        n = X.shape[1]
        return calculus.fd_jacobian(lambda Y: self.grad(np.repeat(T, 2 * n), Y), X)


def _cutoff_support(R, F, cutoff, isotopy, nodes=17, per_axis=5):
    """A box containing ``supp F^lam`` and whether it is exact by construction.

    Fiber coordinates keep the outer range and source coordinates lie in the
    support of ``F``.  Any other coordinate is bounded by sweeping the outer
    box's boundary along the lifted flow, inflated by 10%.
    """
    outer = cutoff.outer
    lo, hi = outer.low.copy(), outer.high.copy()
    src = list(R.source_axes)
    if F.support is not None:
        lo[src], hi[src] = F.support.low, F.support.high
    free = [i for i in R.moving_axes if F.support is None or i not in src]
    exact = not free
    if free:
        pts = outer.boundary_points(per_axis)
        times = np.linspace(F.t_span[0], F.t_span[1], nodes)
        moved = isotopy.transport(np.tile(pts, (nodes, 1)), F.t_span[0], np.repeat(times, len(pts)))
        swept = Box.bounding(np.concatenate([moved, pts]))
        pad = 0.1 * swept.widths
        lo[free] = swept.low[free] - pad[free]
        hi[free] = swept.high[free] + pad[free]
    return Box(tuple(lo), tuple(hi)), exact


def cutoff_hamiltonian(R, F, cutoff, spec=None):
    if spec is not None and not isinstance(spec, IntegratorSpec):
        spec = IntegratorSpec(**spec)
    return CutoffHamiltonian(R, F, cutoff, spec)


__all__ = [
    "CutoffHamiltonian", "CutoffSpec", "GroupoidRealization", "LiftReport",
    "LiftedHamiltonian", "REALIZATIONS", "RealizationReport", "check_base_bracket",
    "check_projection", "check_realization", "check_target_fibers", "cotangent_heisenberg",
    "cutoff_hamiltonian", "get_realization", "lift_hamiltonian", "lifted_flow",
    "pair_groupoid", "pushed_bivector",
]
