"""Hamiltonian isotopies and the algebra of their generating Hamiltonians.

``integrate`` turns a Hamiltonian into an :class:`Isotopy`.  ``compose``,
``inverse`` and ``pullback`` build the Hamiltonians

    (F#H)_t = F_t + H_t o (phi_F^t)^-1
    (Fbar)_t = -F_t o phi_F^t
    (f*F)_t = F_t o f

whose flows are ``phi_F^t o phi_H^t``, ``(phi_F^t)^-1`` and
``f^-1 o phi_F^t o f``.  Evaluating them integrates the inner flow on demand.
"""

import numpy as np

from . import calculus
from .errors import ContractViolation
from .hamiltonians import Box, Profile, TermsHamiltonian, TimeDependentHamiltonian, smooth_step
from .integrators import DEFAULT_SPEC, IntegratorSpec, transport

# Inner flows inside composite Hamiltonians.  Their gradients come from the
# variational equation, never from difference quotients through a solve, so an
# adaptive inner scheme only adds jitter at the (tight) inner tolerance.
INNER_SPEC = IntegratorSpec(rtol=1e-8, atol=1e-8)


def field_function(P, F):
    """Batched ``X_{F_t}(x) = sharp(dF_t)(x)`` for per-point times."""

    def field(T, Y):
        if P.constant:
            return F.grad(T, Y) @ P.constant_matrix
        return np.einsum("mi,mij->mj", F.grad(T, Y), P.matrix(Y))

    return field


def variational_field(P, F):
    """Field on ``(y, J)`` with ``J' = DX_{F_t}(y) J``, states flattened to ``n + n*n``."""
    n = P.dimension

    def field(T, Z):
        m = len(Z)
        Y, J = Z[:, :n], Z[:, n:].reshape(m, n, n)
        g, Hs = F.derivatives(T, Y)
        if P.constant:
            L = P.constant_matrix
            V = g @ L
            DV = np.matmul(L.T, Hs)
        else:
            L = P.matrix(Y)
            V = np.einsum("mi,mij->mj", g, L)
            DV = np.einsum("mik,mij->mjk", Hs, L) + np.einsum("mi,mijk->mjk", g, P.jacobian(Y))
        out = np.empty((m, n + n * n))
        out[:, :n] = V
        out[:, n:] = np.matmul(DV, J).reshape(m, n * n)
        return out

    return field


class Isotopy:
    """The flow ``phi_F^t`` of a Hamiltonian on a Poisson structure.

    Points outside a compact generator's support box are returned unchanged
    without integrating (the field vanishes there).
    """

    def __init__(self, structure, generator, spec=None):
        if generator.dimension != structure.dimension:
            raise ContractViolation("Hamiltonian and structure dimensions differ")
        if generator.structure not in (structure.label, None):
            raise ContractViolation(f"Hamiltonian lives on {generator.structure!r}, "
                                    f"not {structure.label!r}")
        self.structure = structure
        self.generator = generator
        self.spec = spec or DEFAULT_SPEC
        self._field = field_function(structure, generator)
        self._variational = variational_field(structure, generator)

    @property
    def t_start(self):
        return self.generator.t_span[0]

    def transport(self, X, t_from, t_to):
        X = calculus.as_points(X)
        out = np.array(X, dtype=float, copy=True)
        m = len(X)
        t_from = calculus.broadcast_times(t_from, m)
        t_to = calculus.broadcast_times(t_to, m)
        active = (t_from != t_to) & self.generator.moving(X)
        if np.any(active):
            out[active] = transport(self._field, X[active], t_from[active], t_to[active],
                                    self.spec)
        return out

    def transport_jacobian(self, X, t_from, t_to):
        """Transported points and the Jacobian ``(m, n, n)`` of the transport map."""
        X = calculus.as_points(X)
        m, n = X.shape
        out = np.array(X, dtype=float, copy=True)
        jac = np.broadcast_to(np.eye(n), (m, n, n)).copy()
        t_from = calculus.broadcast_times(t_from, m)
        t_to = calculus.broadcast_times(t_to, m)
        active = (t_from != t_to) & self.generator.moving(X)
        if np.any(active):
            k = int(np.count_nonzero(active))
            Z = np.concatenate([X[active], np.broadcast_to(np.eye(n).ravel(), (k, n * n))], axis=1)
            Z = transport(self._variational, Z, t_from[active], t_to[active], self.spec)
            out[active] = Z[:, :n]
            jac[active] = Z[:, n:].reshape(k, n, n)
        return out, jac

    def evaluate(self, t, X):
        """``phi_F^t(X)``."""
        single = np.ndim(X) == 1
        out = self.transport(X, self.t_start, t)
        return out[0] if single else out

    def evaluate_inverse(self, t, X):
        """``(phi_F^t)^-1(X)`` by backward integration of the same field."""
        single = np.ndim(X) == 1
        out = self.transport(X, t, self.t_start)
        return out[0] if single else out

    def trajectory(self, times, x):
        """States of one point at the given increasing times."""
        x = np.asarray(x, dtype=float)
        times = np.asarray(times, dtype=float)
        return self.transport(np.repeat(x[None, :], len(times), axis=0), self.t_start, times)

    def endpoint(self, t=None):
        return Endpoint(self, self.generator.t_span[1] if t is None else t)


class Endpoint:
    """A stored Poisson automorphism: the time-``t`` map of an isotopy."""

    def __init__(self, isotopy, t):
        self.isotopy, self.t = isotopy, float(t)

    @property
    def support(self):
        return self.isotopy.generator.support

    def __call__(self, X):
        return self.isotopy.evaluate(self.t, X)

    def inverse(self, X):
        return self.isotopy.evaluate_inverse(self.t, X)


def integrate(P, F, spec=None):
    if spec is not None and not isinstance(spec, IntegratorSpec):
        spec = IntegratorSpec(**spec)
    return Isotopy(P, F, spec)


def _union(a, b):
    if a is None or b is None:
        return None
    return a.union(b)


def _check_same(F, H):
    if F.structure != H.structure:
        raise ContractViolation("Hamiltonians live on different structures")
    if F.dimension != H.dimension:
        raise ContractViolation("Hamiltonians differ in dimension")
    if F.t_span != H.t_span:
        raise ContractViolation("Hamiltonians differ in time span")


class _Composite(TimeDependentHamiltonian):
    """Composite Hamiltonians: analytic gradient, Hessian from its differences."""

    def hess(self, t, X):
        X = calculus.as_points(X)
        T = np.repeat(calculus.broadcast_times(t, len(X)), 2 * X.shape[1])
        return calculus.fd_jacobian(lambda Y: self.grad(T, Y), X)


class ComposedHamiltonian(_Composite):
    """``(F#H)_t = F_t + H_t o (phi_F^t)^-1``.

    The support box is the union of both boxes: ``phi_F^t`` preserves ``F``'s
    box and fixes everything outside it.
    """

    def __init__(self, P, F, H, spec=None):
        _check_same(F, H)
        super().__init__(F.dimension, F.structure, _union(F.support, H.support), F.t_span,
                         description=f"({F.description})#({H.description})")
        self.F, self.H = F, H
        self.flow_F = Isotopy(P, F, spec or INNER_SPEC)

    def value(self, t, X):
        X = calculus.as_points(X)
        return self.F.value(t, X) + self.H.value(t, self.flow_F.evaluate_inverse(t, X))

    def grad(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        Y, J = self.flow_F.transport_jacobian(X, T, self.flow_F.t_start)
        return self.F.grad(T, X) + np.einsum("mij,mi->mj", J, self.H.grad(T, Y))


class InverseHamiltonian(_Composite):
    """``(Fbar)_t = -F_t o phi_F^t``; same support box as ``F``."""

    def __init__(self, P, F, spec=None):
        super().__init__(F.dimension, F.structure, F.support, F.t_span,
                         description=f"inverse({F.description})")
        self.F = F
        self.flow_F = Isotopy(P, F, spec or INNER_SPEC)

    def value(self, t, X):
        X = calculus.as_points(X)
        return -self.F.value(t, self.flow_F.evaluate(t, X))

    def grad(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        Y, J = self.flow_F.transport_jacobian(X, self.flow_F.t_start, T)
        return -np.einsum("mij,mi->mj", J, self.F.grad(T, Y))


class PulledBackHamiltonian(_Composite):
    """``(f*F)_t = F_t o f`` for a stored endpoint ``f``."""

    def __init__(self, f, F, spec=None):
        super().__init__(F.dimension, F.structure, _union(F.support, f.support), F.t_span,
                         description=f"pullback({F.description})")
        self.F = F
        self.f = Endpoint(Isotopy(f.isotopy.structure, f.isotopy.generator, spec or INNER_SPEC),
                          f.t)

    def value(self, t, X):
        X = calculus.as_points(X)
        return self.F.value(t, self.f(X))

    def grad(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        iso = self.f.isotopy
        Y, J = iso.transport_jacobian(X, iso.t_start, self.f.t)
        return np.einsum("mij,mi->mj", J, self.F.grad(T, Y))


class ReparametrizedHamiltonian(TimeDependentHamiltonian):
    """``F^sigma(t, x) = sigma'(t) F(sigma(t), x)`` on ``[a, b]``."""

    def __init__(self, F, sigma, dsigma, t_span):
        super().__init__(F.dimension, F.structure, F.support, t_span,
                         description=f"reparam({F.description})")
        self.F, self.sigma, self.dsigma = F, sigma, dsigma

    def _times(self, t, m):
        T = calculus.broadcast_times(t, m)
        return np.asarray(self.sigma(T), dtype=float), np.asarray(self.dsigma(T), dtype=float)

    def value(self, t, X):
        X = calculus.as_points(X)
        s, ds = self._times(t, len(X))
        return ds * self.F.value(s, X)

    def grad(self, t, X):
        X = calculus.as_points(X)
        s, ds = self._times(t, len(X))
        return ds[:, None] * self.F.grad(s, X)

    def hess(self, t, X):
        X = calculus.as_points(X)
        s, ds = self._times(t, len(X))
        return ds[:, None, None] * self.F.hess(s, X)


def compose(P, F, H, spec=None):
    """``F#H``, generating ``phi_F^t o phi_H^t``."""
    return ComposedHamiltonian(P, F, H, spec)


def inverse(P, F, spec=None):
    """``Fbar``, generating ``(phi_F^t)^-1``."""
    return InverseHamiltonian(P, F, spec)


def pullback(f, F, spec=None):
    """``f*F`` for ``f`` a stored endpoint of a Hamiltonian isotopy."""
    if not isinstance(f, Endpoint):
        raise ContractViolation("pullback needs a stored isotopy endpoint")
    if f.isotopy.generator.structure != F.structure:
        raise ContractViolation("diffeomorphism and Hamiltonian live on different structures")
    return PulledBackHamiltonian(f, F, spec)


def reparametrize(F, sigma, dsigma, t_span=(0.0, 1.0), checks=257):
    """``F^sigma`` for a smooth non-decreasing surjection ``sigma: [a, b] -> [0, 1]``."""
    a, b = float(t_span[0]), float(t_span[1])
    if not b > a:
        raise ContractViolation("reparametrization interval must have b > a")
    lo, hi = F.t_span
    ends = np.asarray(sigma(np.array([a, b])), dtype=float)
    if abs(ends[0] - lo) > 1e-12 or abs(ends[1] - hi) > 1e-12:
        raise ContractViolation(f"sigma must map [{a}, {b}] onto [{lo}, {hi}]; got {ends}")
    ts = np.linspace(a, b, checks)
    vals = np.asarray(sigma(ts), dtype=float)
    if np.any(np.asarray(dsigma(ts)) < -1e-12) or np.any(np.diff(vals) < -1e-12):
        raise ContractViolation("sigma must be non-decreasing")
    if isinstance(F, TermsHamiltonian):
        def make(profile):
            return Profile(lambda t, g=profile: np.asarray(dsigma(t)) * g(np.asarray(sigma(t))))
        terms = [(make(p), s) for p, s in F.terms]
        return TermsHamiltonian(terms, F.structure, (a, b),
                                description=f"reparam({F.description})")
    return ReparametrizedHamiltonian(F, sigma, dsigma, (a, b))


def flat_step(delta):
    """``sigma_delta``: constant on ``[0, delta]`` and ``[1 - delta, 1]``."""
    width = 1.0 - 2.0 * delta

    def sigma(t):
        return smooth_step((np.asarray(t, dtype=float) - delta) / width)[0]

    def dsigma(t):
        return smooth_step((np.asarray(t, dtype=float) - delta) / width)[1] / width

    return sigma, dsigma


def flatten_boundary(F, delta):
    """Reparametrize so the isotopy is stationary on ``[0, delta]`` and ``[1-delta, 1]``."""
    if not 0.0 < delta < 0.5:
        raise ContractViolation("delta must lie in (0, 1/2)")
    if F.t_span != (0.0, 1.0):
        raise ContractViolation("flatten_boundary expects a Hamiltonian on [0, 1]")
    sigma, dsigma = flat_step(delta)
    return reparametrize(F, sigma, dsigma, (0.0, 1.0))


__all__ = [
    "Isotopy", "Endpoint", "IntegratorSpec", "integrate", "compose", "inverse", "pullback",
    "reparametrize", "flatten_boundary", "flat_step", "smooth_step", "field_function", "Box",
]
