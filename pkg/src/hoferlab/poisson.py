"""Poisson structures on global charts of R^n.

Convention for the musical map: ``v = sharp(alpha)`` has components
``v_j = sum_i alpha_i * Lambda_ij(x)``, so that ``beta(sharp alpha) =
Lambda(alpha, beta) = alpha^T Lambda beta`` and ``{F, H} = dF^T Lambda dH``.
With this choice ``X_F = sharp(dF)`` satisfies ``{F, H} = X_F H``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import sympy as sp

from . import calculus
from .errors import ContractViolation, NumericDomainError, UnsupportedGeometry
from .expressions import Expression
from .hamiltonians import Affine, Box, SpatialFunction, TimeDependentHamiltonian, Zero

RANK_TOL = 1e-12


@dataclass(frozen=True)
class PoissonStructure:
    """A bivector field ``Lambda(x)`` on R^n.

    ``bivector`` maps an ``(m, n)`` batch to ``(m, n, n)``;
    ``bivector_jacobian`` (optional) maps it to ``(m, n, n, n)`` with the
    derivative index last.  ``leaf_axes`` names the coordinate axes spanning
    the (affine) symplectic leaves of a built-in; ``None`` means leaves are
    only known pointwise.
    """

    label: str
    dimension: int
    bivector: Callable = field(repr=False)
    bivector_jacobian: Optional[Callable] = field(default=None, repr=False)
    casimirs: tuple = field(default=(), repr=False)
    leaf_axes: Optional[tuple] = None
    constant: bool = False
    symplectic: bool = False
    description: str = ""

    @cached_property
    def constant_matrix(self):
        """The bivector of a constant structure as one ``(n, n)`` array."""
        if not self.constant:
            raise ContractViolation(f"{self.label} is not a constant structure")
        return np.array(self.matrix(np.zeros(self.dimension))[0])

    def matrix(self, x):
        X = calculus.as_points(x)
        if X.shape[-1] != self.dimension:
            raise ContractViolation(f"point has dimension {X.shape[-1]}, structure {self.label} "
                                    f"has {self.dimension}")
        L = np.asarray(self.bivector(X), dtype=float)
        return np.broadcast_to(L, (len(X), self.dimension, self.dimension))

    def jacobian(self, x):
        X = calculus.as_points(x)
        if self.bivector_jacobian is not None:
            J = np.asarray(self.bivector_jacobian(X), dtype=float)
            return np.broadcast_to(J, (len(X),) + (self.dimension,) * 3)
        n = self.dimension
        flat = calculus.fd_jacobian(lambda Y: self.matrix(Y).reshape(len(Y), n * n), X)
        return flat.reshape(len(X), n, n, n)


def _constant(matrix):
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]

    def bivector(X):
        return np.broadcast_to(matrix, (len(X), n, n))

    def jacobian(X):
        return np.zeros((len(X), n, n, n))

    return bivector, jacobian


def standard_symplectic(n=1):
    """Constant block bivector on R^{2n}, coordinates ``(q_1..q_n, p_1..p_n)``."""
    n = int(n)
    if n < 1:
        raise ContractViolation("symplectic2n needs n >= 1")
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    biv, jac = _constant(J)
    return PoissonStructure(f"symplectic2n:{n}", 2 * n, biv, jac,
                            leaf_axes=tuple(range(2 * n)), constant=True, symplectic=True,
                            description="standard symplectic structure")


def heisenberg3():
    """Lie-Poisson structure of the Heisenberg algebra: ``Lambda = x3 d1^d2``."""

    def bivector(X):
        L = np.zeros((len(X), 3, 3))
        L[:, 0, 1] = X[:, 2]
        L[:, 1, 0] = -X[:, 2]
        return L

    def jacobian(X):
        J = np.zeros((len(X), 3, 3, 3))
        J[:, 0, 1, 2] = 1.0
        J[:, 1, 0, 2] = -1.0
        return J

    return PoissonStructure("heisenberg3", 3, bivector, jacobian,
                            casimirs=(Affine(3, 2),), leaf_axes=(0, 1),
                            description="Heisenberg Lie-Poisson, {x1,x2} = x3")


def product2x1():
    """Regular structure on R^2 x R with the last coordinate a Casimir."""
    L = np.zeros((3, 3))
    L[0, 1], L[1, 0] = 1.0, -1.0
    biv, jac = _constant(L)
    return PoissonStructure("product2x1", 3, biv, jac, casimirs=(Affine(3, 2),),
                            leaf_axes=(0, 1), constant=True,
                            description="R^2 x R, leaves z = const")


def custom(entries, dimension=None, label="custom"):
    """Bivector from expressions.

    ``entries`` is either a mapping ``{"i,j": text}`` of 1-based upper-triangle
    entries, or a full ``n x n`` nested list of texts (antisymmetry is checked
    symbolically).
    """
    if isinstance(entries, dict):
        if dimension is None:
            raise ContractViolation("custom bivector from entries needs a dimension")
        n = int(dimension)
        names = [f"x{i + 1}" for i in range(n)]
        M = sp.zeros(n, n)
        for key, text in entries.items():
            i, j = (int(v) - 1 for v in str(key).replace("(", "").replace(")", "").split(","))
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ContractViolation(f"bad bivector index {key!r}")
            e = Expression(text, names).expr
            M[i, j] = e
            M[j, i] = -e
    else:
        rows = list(entries)
        n = len(rows)
        names = [f"x{i + 1}" for i in range(n)]
        M = sp.Matrix([[Expression(str(v), names).expr for v in row] for row in rows])
        if M.shape != (n, n) or sp.simplify(M + M.T) != sp.zeros(n, n):
            raise ContractViolation("custom bivector must be a square antisymmetric matrix")
    symbols = [sp.Symbol(v, real=True) for v in names]
    entry_fns = [[sp.lambdify(symbols, M[i, j], "numpy") for j in range(n)] for i in range(n)]
    deriv_fns = [[[sp.lambdify(symbols, sp.diff(M[i, j], s), "numpy") for s in symbols]
                  for j in range(n)] for i in range(n)]

    def evaluate(fns, X, shape):
        cols = [X[:, k] for k in range(n)]
        out = np.empty((len(X),) + shape)
        for idx in np.ndindex(*shape):
            f = fns
            for k in idx:
                f = f[k]
            out[(slice(None),) + idx] = np.broadcast_to(np.asarray(f(*cols), dtype=float), (len(X),))
        return out

    constant = all(e.is_number for e in M)
    return PoissonStructure(label, n,
                            lambda X: evaluate(entry_fns, X, (n, n)),
                            lambda X: evaluate(deriv_fns, X, (n, n, n)),
                            constant=constant, description=f"custom bivector {M.tolist()}")


def nonpoisson_control():
    """Contact-type bivector ``d1^d2 - x2 d2^d3 + x1 d3^d1`` (Jacobi residual = 2)."""
    return custom({"1,2": "1", "2,3": "-x2", "1,3": "-x1"}, 3, label="control:contact3")


STRUCTURE_LABELS = ("symplectic2n:<n>", "heisenberg3", "product2x1", "custom")


def get_structure(label, bivector=None, dimension=None):
    """Resolve a registry label to a structure."""
    label = str(label)
    if label.startswith("symplectic2n:"):
        try:
            n = int(label.split(":", 1)[1])
        except ValueError:
            raise ContractViolation(f"bad structure label {label!r}") from None
        return standard_symplectic(n)
    if label == "heisenberg3":
        return heisenberg3()
    if label == "product2x1":
        return product2x1()
    if label == "custom":
        if bivector is None:
            raise ContractViolation("custom structure requires a bivector declaration")
        return custom(bivector, dimension)
    if label == "control:contact3":
        return nonpoisson_control()
    raise ContractViolation(f"unknown structure label {label!r}")


# -- scalar functions ----------------------------------------------------------


class _Callable(SpatialFunction):
    """Wrap a plain ``f(x) -> float`` as a batched spatial function."""

    def __init__(self, fn, dimension):
        super().__init__(dimension)
        self.fn = fn

    def value(self, X):
        X = calculus.as_points(X)
        return np.array([float(self.fn(row)) for row in X])


def as_function(f, dimension):
    if isinstance(f, SpatialFunction):
        return f
    if isinstance(f, str):
        from .hamiltonians import ExpressionFunction
        return ExpressionFunction(f, dimension)
    return _Callable(f, dimension)


def coordinate(index, dimension):
    """The coordinate function ``x_{index+1}`` (0-based ``index``)."""
    return Affine(dimension, index)


def _finite(arr, what):
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"non-finite {what}")
    return arr


def _check_dim(P, X):
    if X.shape[-1] != P.dimension:
        raise ContractViolation(f"dimension mismatch: {X.shape[-1]} vs {P.dimension}")


def sharp(P, x, alpha):
    """Musical map at ``x``: returns ``v`` with ``beta . v = Lambda(alpha, beta)``."""
    X = calculus.as_points(x)
    A = calculus.as_points(alpha)
    _check_dim(P, X)
    _check_dim(P, A)
    v = np.einsum("mi,mij->mj", A, P.matrix(X))
    return v[0] if np.ndim(x) == 1 and np.ndim(alpha) == 1 else v


def _pairing(L, a, b):
    return np.einsum("mi,mij,mj->m", a, L, b)


def bracket(P, F, H, x):
    """``{F, H}(x) = Lambda(dF, dH)``; exactly antisymmetric in ``(F, H)``."""
    X = calculus.as_points(x)
    _check_dim(P, X)
    F, H = as_function(F, P.dimension), as_function(H, P.dimension)
    gF = _finite(F.grad(X), "gradient")
    gH = _finite(H.grad(X), "gradient")
    L = P.matrix(X)
    out = 0.5 * (_pairing(L, gF, gH) - _pairing(L, gH, gF))
    return float(out[0]) if np.ndim(x) == 1 else out


def hamiltonian_field(P, F, x):
    """``X_F = sharp(dF)``."""
    X = calculus.as_points(x)
    _check_dim(P, X)
    F = as_function(F, P.dimension)
    v = np.einsum("mi,mij->mj", _finite(F.grad(X), "gradient"), P.matrix(X))
    return v[0] if np.ndim(x) == 1 else v


class BracketFunction(SpatialFunction):
    """The function ``{G, H}`` with its gradient from Hessians and ``dLambda``."""

    def __init__(self, P, G, H):
        super().__init__(P.dimension)
        self.P, self.G, self.H = P, as_function(G, P.dimension), as_function(H, P.dimension)

    def value(self, X):
        return bracket(self.P, self.G, self.H, calculus.as_points(X))

    def grad(self, X):
        X = calculus.as_points(X)
        L, dL = self.P.matrix(X), self.P.jacobian(X)
        gG, gH = self.G.grad(X), self.H.grad(X)
        hG, hH = self.G.hess(X), self.H.hess(X)

        def hess_term(h, g):
            return np.einsum("mli,mij,mj->ml", h, L, g)

        def deriv_term(a, b):
            return np.einsum("mi,mijl,mj->ml", a, dL, b)

        return (hess_term(hG, gH) - hess_term(hH, gG)
                + 0.5 * (deriv_term(gG, gH) - deriv_term(gH, gG)))


def jacobi_residual(P, F, G, H, x):
    """``|{F,{G,H}} + {H,{F,G}} + {G,{H,F}}|`` at ``x``."""
    X = calculus.as_points(x)
    _check_dim(P, X)
    n = P.dimension
    F, G, H = (as_function(f, n) for f in (F, G, H))
    total = (bracket(P, F, BracketFunction(P, G, H), X)
             + bracket(P, H, BracketFunction(P, F, G), X)
             + bracket(P, G, BracketFunction(P, H, F), X))
    out = np.abs(_finite(total, "Jacobi residual"))
    return float(out[0]) if np.ndim(x) == 1 else out


def coordinate_jacobi_residual(P, x):
    """Largest Jacobi residual over all coordinate-function triples at ``x``."""
    n = P.dimension
    coords = [coordinate(i, n) for i in range(n)]
    X = calculus.as_points(x)
    worst = np.zeros(len(X))
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                worst = np.maximum(worst, jacobi_residual(P, coords[i], coords[j], coords[k], X))
    return worst


# -- symplectic leaves ---------------------------------------------------------


@dataclass(frozen=True)
class LeafChart:
    """Pointwise leaf data plus, for affine built-in leaves, a global embedding."""

    base_point: np.ndarray
    dimension: int
    basis: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    restricted_bivector: np.ndarray = field(repr=False)
    proper: bool = False
    affine: bool = False

    @property
    def origin(self):
        """Point of the leaf whose leaf coordinates are zero."""
        return self.base_point - self.basis @ (self.basis.T @ self.base_point)

    def embed(self, U):
        U = calculus.as_points(U)
        return self.origin + U @ self.basis.T

    def coordinates(self, X):
        return (calculus.as_points(X) - self.origin) @ self.basis

    def distance(self, X):
        """Euclidean distance of points to the leaf (affine leaves only)."""
        X = calculus.as_points(X)
        d = X - self.origin
        return np.linalg.norm(d - (d @ self.basis) @ self.basis.T, axis=-1)


def leaf_at(P, x):
    x = np.asarray(x, dtype=float)
    _check_dim(P, x[None, :])
    L = P.matrix(x)[0]
    scale = max(1.0, float(np.max(np.abs(L))))
    rank = int(np.linalg.matrix_rank(L, tol=RANK_TOL * scale))
    n = P.dimension
    if rank == 0:
        empty = np.zeros((n, 0))
        return LeafChart(x, 0, empty, np.zeros((0, 0)), np.zeros((0, 0)), proper=False,
                         affine=P.leaf_axes is not None)
    if P.leaf_axes is not None and len(P.leaf_axes) == rank:
        basis = np.eye(n)[:, list(P.leaf_axes)]
    else:
        U, _, _ = np.linalg.svd(L)
        basis = U[:, :rank]
    restricted = basis.T @ L @ basis
    sigma = np.linalg.inv(restricted)
    return LeafChart(x, rank, basis, sigma, restricted,
                     proper=P.leaf_axes is not None, affine=P.leaf_axes is not None)


class LeafHamiltonian(TimeDependentHamiltonian):
    def __init__(self, F, leaf):
        self.F, self.leaf = F, leaf
        support = None
        if F.support is not None:
            axes = [int(np.argmax(np.abs(leaf.basis[:, k]))) for k in range(leaf.dimension)]
            normal = [k for k in range(F.dimension) if k not in axes]
            o = leaf.origin
            inside = all(F.support.lo[k] <= o[k] <= F.support.hi[k] for k in normal)
            if inside:
                support = Box(tuple(F.support.low[axes] - leaf.origin[axes]),
                              tuple(F.support.high[axes] - leaf.origin[axes]))
            else:
                support = Box.cube(0.0, leaf.dimension)
        super().__init__(leaf.dimension, "leaf", support, F.t_span,
                         description=f"{F.description} restricted to leaf")

    def value(self, t, U):
        return self.F.value(t, self.leaf.embed(U))


def restrict_to_leaf(F, leaf):
    """``F_L(t, u) = F(t, embed_L(u))`` on a positive-dimensional affine leaf."""
    if leaf.dimension == 0:
        raise ContractViolation("cannot restrict to a zero-dimensional leaf")
    if not leaf.affine:
        raise UnsupportedGeometry("leaf restriction needs a built-in structure with affine leaves")
    if not np.allclose(np.abs(leaf.basis).sum(axis=0), 1.0):
        raise UnsupportedGeometry("leaf restriction needs coordinate-aligned leaves")
    return LeafHamiltonian(F, leaf)


__all__ = [
    "PoissonStructure", "LeafChart", "standard_symplectic", "heisenberg3", "product2x1",
    "custom", "nonpoisson_control", "get_structure", "sharp", "bracket", "hamiltonian_field",
    "jacobi_residual", "coordinate_jacobi_residual", "leaf_at", "restrict_to_leaf",
    "coordinate", "as_function", "BracketFunction", "Zero",
]
