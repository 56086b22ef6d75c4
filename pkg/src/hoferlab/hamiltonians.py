"""Time-dependent Hamiltonians with declared compact support.

A Hamiltonian is evaluated in batches: ``value(t, X)`` with ``X`` of shape
``(m, n)`` and ``t`` a scalar or an ``(m,)`` array (one time per point).
Built-in families are sums of terms ``g(t) * S(x)`` with analytic spatial
derivatives; derived Hamiltonians (products, inverses, lifts, ...) fall back
to central differences.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import calculus
from .errors import ContractViolation
from .expressions import Expression


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ContractViolation("box corners differ in dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ContractViolation(f"box has lo > hi: {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, half_width, dimension, center=None):
        c = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @classmethod
    def bounding(cls, X):
        X = np.atleast_2d(X)
        return cls(tuple(X.min(axis=0)), tuple(X.max(axis=0)))

    @property
    def dimension(self):
        return len(self.lo)

    @property
    def low(self):
        return np.array(self.lo)

    @property
    def high(self):
        return np.array(self.hi)

    @property
    def center(self):
        return 0.5 * (self.low + self.high)

    @property
    def widths(self):
        return self.high - self.low

    def contains(self, X, tol=0.0):
        X = np.atleast_2d(X)
        return np.all((X >= self.low - tol) & (X <= self.high + tol), axis=-1)

    def inflate(self, margin):
        return Box(tuple(self.low - margin), tuple(self.high + margin))

    def scaled(self, factor):
        half = 0.5 * factor * self.widths
        return Box(tuple(self.center - half), tuple(self.center + half))

    def union(self, other):
        if other is None:
            return self
        return Box(tuple(np.minimum(self.low, other.low)), tuple(np.maximum(self.high, other.high)))

    def intersect(self, other):
        lo = np.maximum(self.low, other.low)
        hi = np.minimum(self.high, other.high)
        if np.any(lo > hi):
            return None
        return Box(tuple(lo), tuple(hi))

    def corners(self):
        grids = np.meshgrid(*[(a, b) for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def boundary_points(self, per_axis):
        """Points of a ``per_axis`` lattice lying on the box boundary."""
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lo, self.hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        on_face = np.any(np.isclose(pts, self.low) | np.isclose(pts, self.high), axis=-1)
        return pts[on_face]

    def to_list(self):
        return [list(self.lo), list(self.hi)]


def as_box(spec):
    if spec is None or isinstance(spec, Box):
        return spec
    lo, hi = spec
    return Box(tuple(lo), tuple(hi))


# -- spatial parts -----------------------------------------------------------


class SpatialFunction:
    """Base class: ``value``/``grad``/``hess`` over batches of points."""

    support = None

    def __init__(self, dimension):
        self.dimension = int(dimension)

    def value(self, X):
        raise NotImplementedError

    def grad(self, X):
        return calculus.fd_gradient(self.value, X)

    def hess(self, X):
        return calculus.fd_jacobian(self.grad, X)

    def derivatives(self, X):
        """Gradient and Hessian together (subclasses share intermediate work)."""
        return self.jet(X)[1:]

    def jet(self, X):
        """Value, gradient and Hessian."""
        return self.value(X), self.grad(X), self.hess(X)

    def __call__(self, x):
        out = self.value(calculus.as_points(x))
        return float(out[0]) if np.ndim(x) == 1 else out


class Zero(SpatialFunction):
    def __init__(self, dimension):
        super().__init__(dimension)
        self.support = Box.cube(0.0, dimension)

    def value(self, X):
        return np.zeros(len(calculus.as_points(X)))

    def grad(self, X):
        return np.zeros(calculus.as_points(X).shape)

    def hess(self, X):
        X = calculus.as_points(X)
        return np.zeros(X.shape + (X.shape[1],))


def smooth_step(u):
    """C-infinity step ``expit(1/(1-u) - 1/u)`` on (0, 1) with its first two derivatives."""
    u = np.asarray(u, dtype=float)
    inner = (u > 0.0) & (u < 1.0)
    uc = np.clip(u, 1e-6, 1.0 - 1e-6)
    a, b = 1.0 / (1.0 - uc), 1.0 / uc
    psi = expit(a - b)
    w = psi * (1.0 - psi) * inner
    dz = a * a + b * b
    d2z = 2.0 * (a * a * a - b * b * b)
    s = np.where(inner, psi, u >= 1.0)
    return s, w * dz, w * (d2z + (1.0 - 2.0 * psi) * dz * dz)


class Plateau(SpatialFunction):
    """Smooth cutoff: 1 on ``inner``, 0 outside ``outer``, C-infinity ramps per axis."""

    def __init__(self, inner, outer):
        inner, outer = as_box(inner), as_box(outer)
        super().__init__(inner.dimension)
        if np.any(outer.low >= inner.low) or np.any(outer.high <= inner.high):
            raise ContractViolation("plateau outer box must strictly contain the inner box")
        self.inner, self.outer = inner, outer
        self.support = outer
        n = self.dimension
        self._w_lo = inner.low - outer.low
        self._w_hi = outer.high - inner.high
        # _skip1[k, j]: factor j is left out of the gradient product for axis k;
        # _skip2[k, l, j]: same for the (k, l) Hessian entry.
        eye = np.eye(n, dtype=bool)
        self._skip1 = eye
        self._skip2 = eye[:, None, :] | eye[None, :, :]

    def _factors(self, X):
        """Per-axis factor ``phi_k(x_k)`` with its first two derivatives."""
        X = calculus.as_points(X)
        u = np.concatenate([(X - self.outer.low) / self._w_lo, (self.outer.high - X) / self._w_hi],
                           axis=1)
        s, ds, d2s = smooth_step(u)
        n = X.shape[1]
        a, b = s[:, :n], s[:, n:]
        da, db = ds[:, :n] / self._w_lo, -ds[:, n:] / self._w_hi
        d2a, d2b = d2s[:, :n] / self._w_lo**2, d2s[:, n:] / self._w_hi**2
        return a * b, da * b + a * db, d2a * b + 2.0 * da * db + a * d2b

    @staticmethod
    def _rest(phi, skip):
        """Products of the factors not flagged in ``skip`` (last axis indexes factors)."""
        shape = (len(phi),) + (1,) * (skip.ndim - 1) + (phi.shape[1],)
        return np.where(skip, 1.0, phi.reshape(shape)).prod(axis=-1)

    def value(self, X):
        phi, _, _ = self._factors(X)
        return np.prod(phi, axis=-1)

    def grad(self, X):
        phi, dphi, _ = self._factors(X)
        return dphi * self._rest(phi, self._skip1)

    def hess(self, X):
        return self.jet(X)[2]

    def jet(self, X):
        phi, dphi, d2phi = self._factors(X)
        g = dphi * self._rest(phi, self._skip1)
        H = dphi[:, :, None] * dphi[:, None, :] * self._rest(phi, self._skip2)
        idx = np.arange(phi.shape[1])
        H[:, idx, idx] = d2phi * self._rest(phi, self._skip1)
        return np.prod(phi, axis=-1), g, H


class Bump(SpatialFunction):
    """``height * exp(1 - 1/(1 - |x-c|²/r²))`` inside the ball, 0 outside."""

    def __init__(self, center, radius, height=1.0):
        center = np.asarray(center, dtype=float)
        super().__init__(len(center))
        if radius <= 0:
            raise ContractViolation("bump radius must be positive")
        self.center, self.radius, self.height = center, float(radius), float(height)
        self.support = Box.cube(self.radius, self.dimension, center)

    def _parts(self, X):
        X = calculus.as_points(X)
        d = X - self.center
        w = 1.0 - np.sum(d**2, axis=-1) / self.radius**2
        inside = w > 0.0
        wc = np.where(inside, w, 1.0)
        b = np.where(inside, self.height * np.exp(1.0 - 1.0 / wc), 0.0)
        return d, wc, b

    def value(self, X):
        return self._parts(X)[2]

    def grad(self, X):
        d, w, b = self._parts(X)
        return (-2.0 / self.radius**2) * (b / w**2)[:, None] * d

    def hess(self, X):
        d, w, b = self._parts(X)
        r2 = self.radius**2
        n = d.shape[1]
        outer = np.einsum("mi,mj->mij", d, d)
        d2 = b * (1.0 - 2.0 * w) / w**4
        return ((4.0 / r2**2) * d2[:, None, None] * outer
                - (2.0 / r2) * (b / w**2)[:, None, None] * np.eye(n))

    def jet(self, X):
        d, w, b = self._parts(X)
        r2 = self.radius**2
        c1 = b / w**2
        d2 = c1 * (1.0 - 2.0 * w) / w**2
        g = (-2.0 / r2) * c1[:, None] * d
        H = (4.0 / r2**2) * d2[:, None, None] * (d[:, :, None] * d[:, None, :])
        H -= (2.0 / r2) * c1[:, None, None] * np.eye(d.shape[1])
        return b, g, H


class Affine(SpatialFunction):
    """``scale * (x_i - offset)``; not compactly supported on its own."""

    def __init__(self, dimension, index, scale=1.0, offset=0.0):
        super().__init__(dimension)
        self.index, self.scale, self.offset = int(index), float(scale), float(offset)

    def value(self, X):
        X = calculus.as_points(X)
        return self.scale * (X[:, self.index] - self.offset)

    def grad(self, X):
        X = calculus.as_points(X)
        g = np.zeros(X.shape)
        g[:, self.index] = self.scale
        return g

    def hess(self, X):
        X = calculus.as_points(X)
        return np.zeros(X.shape + (X.shape[1],))


class Quadratic(SpatialFunction):
    """``0.5 * scale * |x - c|²`` (rotations in a symplectic plane)."""

    def __init__(self, center, scale=1.0):
        center = np.asarray(center, dtype=float)
        super().__init__(len(center))
        self.center, self.scale = center, float(scale)

    def value(self, X):
        X = calculus.as_points(X)
        return 0.5 * self.scale * np.sum((X - self.center) ** 2, axis=-1)

    def grad(self, X):
        return self.scale * (calculus.as_points(X) - self.center)

    def hess(self, X):
        X = calculus.as_points(X)
        m, n = X.shape
        H = np.zeros((m, n, n))
        H[:, np.arange(n), np.arange(n)] = self.scale
        return H


class ExpressionFunction(SpatialFunction):
    def __init__(self, text, dimension):
        super().__init__(dimension)
        self.expression = Expression(text, [f"x{i + 1}" for i in range(dimension)])

    def value(self, X):
        return self.expression.value(X)

    def grad(self, X):
        return self.expression.grad(X)

    def hess(self, X):
        return self.expression.hess(X)


class Product(SpatialFunction):
    def __init__(self, left, right):
        super().__init__(left.dimension)
        self.left, self.right = left, right
        supports = [s for s in (left.support, right.support) if s is not None]
        if len(supports) == 2:
            self.support = supports[0].intersect(supports[1]) or Box.cube(0.0, self.dimension)
        elif supports:
            self.support = supports[0]

    def value(self, X):
        return self.left.value(X) * self.right.value(X)

    def grad(self, X):
        a, b = self.left.value(X), self.right.value(X)
        return self.left.grad(X) * b[:, None] + a[:, None] * self.right.grad(X)

    def hess(self, X):
        a, b = self.left.value(X), self.right.value(X)
        ga, gb = self.left.grad(X), self.right.grad(X)
        cross = np.einsum("mi,mj->mij", ga, gb)
        return (self.left.hess(X) * b[:, None, None] + a[:, None, None] * self.right.hess(X)
                + cross + np.swapaxes(cross, 1, 2))

    def jet(self, X):
        a, ga, Ha = self.left.jet(X)
        b, gb, Hb = self.right.jet(X)
        cross = ga[:, :, None] * gb[:, None, :]
        H = Ha * b[:, None, None] + a[:, None, None] * Hb + cross + np.swapaxes(cross, 1, 2)
        return a * b, ga * b[:, None] + a[:, None] * gb, H


class Sum(SpatialFunction):
    def __init__(self, parts, weights=None):
        parts = list(parts)
        super().__init__(parts[0].dimension)
        self.parts = parts
        self.weights = [1.0] * len(parts) if weights is None else [float(w) for w in weights]
        if all(p.support is not None for p in parts):
            box = parts[0].support
            for p in parts[1:]:
                box = box.union(p.support)
            self.support = box

    def value(self, X):
        return sum(w * p.value(X) for w, p in zip(self.weights, self.parts))

    def grad(self, X):
        return sum(w * p.grad(X) for w, p in zip(self.weights, self.parts))

    def hess(self, X):
        return sum(w * p.hess(X) for w, p in zip(self.weights, self.parts))

    def jet(self, X):
        jets = [p.jet(X) for p in self.parts]
        return tuple(sum(w * j[k] for w, j in zip(self.weights, jets)) for k in range(3))


# -- time profiles -----------------------------------------------------------


class Profile:
    """A scalar time profile ``g(t)``; text goes through the expression grammar."""

    def __init__(self, source=1.0, derivative=None):
        self.source = source
        self._derivative = derivative
        if isinstance(source, (int, float)):
            const = float(source)
            self._fn = lambda t: np.full(np.shape(t), const)
            self.text = repr(const)
        elif isinstance(source, str):
            expr = Expression(source, ["t"])
            self._fn = lambda t: expr.evaluate_columns([np.ravel(t)]).reshape(np.shape(t))
            self.text = source
        else:
            self._fn = source
            self.text = getattr(source, "__name__", "callable")

    def __call__(self, t):
        return np.asarray(self._fn(np.asarray(t, dtype=float)), dtype=float)

    def __repr__(self):
        return f"Profile({self.text!r})"


# -- Hamiltonians ------------------------------------------------------------


class TimeDependentHamiltonian:
    """``F(t, x)`` on ``t_span x R^n``, zero outside ``support`` (``None`` = not compact)."""

    support = None
    t_span = (0.0, 1.0)

    def __init__(self, dimension, structure, support=None, t_span=(0.0, 1.0), description=""):
        self.dimension = int(dimension)
        self.structure = structure
        self.support = as_box(support)
        self.t_span = (float(t_span[0]), float(t_span[1]))
        self.description = description

    @property
    def compact(self):
        return self.support is not None

    def value(self, t, X):
        raise NotImplementedError

    def moving(self, X):
        """Mask of points the flow can move; the field vanishes off the support."""
        if self.support is None:
            return np.ones(len(X), dtype=bool)
        return self.support.contains(X)

    def grad(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        n = X.shape[1]
        T_stencil = np.repeat(T, 2 * n)
        return calculus.fd_gradient(lambda Y: self.value(T_stencil, Y), X)

    def hess(self, t, X):
        X = calculus.as_points(X)
        T = calculus.broadcast_times(t, len(X))
        n = X.shape[1]
        k = 1 + 2 * n + 2 * n * (n - 1)
        H, _ = calculus.fd_hessian(lambda Y: self.value(np.repeat(T, k), Y), X)
        return H

    def derivatives(self, t, X):
        return self.grad(t, X), self.hess(t, X)

    def __call__(self, t, x):
        out = self.value(t, calculus.as_points(x))
        return float(out[0]) if np.ndim(x) == 1 else out

    def check_support(self, samples_per_axis=5, times=(0.0, 0.5, 1.0)):
        """Spot-check that F vanishes on the support box inflated by 5%."""
        if self.support is None:
            return 0.0
        shell = self.support.scaled(1.05)
        if np.all(shell.widths == 0):
            return 0.0
        pts = shell.boundary_points(samples_per_axis)
        worst = 0.0
        for t in times:
            worst = max(worst, float(np.max(np.abs(self.value(t, pts)), initial=0.0)))
        return worst

    def __repr__(self):
        return f"{type(self).__name__}({self.description or self.structure})"


class TermsHamiltonian(TimeDependentHamiltonian):
    """``sum_k g_k(t) * S_k(x)`` with analytic spatial derivatives."""

    def __init__(self, terms, structure, t_span=(0.0, 1.0), description=""):
        terms = [(p if isinstance(p, Profile) else Profile(p), s) for p, s in terms]
        dimension = terms[0][1].dimension
        support = None
        if all(s.support is not None for _, s in terms):
            support = terms[0][1].support
            for _, s in terms[1:]:
                support = support.union(s.support)
        super().__init__(dimension, structure, support, t_span, description)
        self.terms = terms

    @property
    def separable(self):
        return len(self.terms) == 1

    def _weights(self, t, m):
        T = calculus.broadcast_times(t, m)
        out = []
        for p, _ in self.terms:
            w = p(T)
            out.append(w if w.shape == (m,) else np.broadcast_to(w, (m,)))
        return out

    def value(self, t, X):
        X = calculus.as_points(X)
        w = self._weights(t, len(X))
        return sum(wk * s.value(X) for wk, (_, s) in zip(w, self.terms))

    def grad(self, t, X):
        X = calculus.as_points(X)
        w = self._weights(t, len(X))
        return sum(wk[:, None] * s.grad(X) for wk, (_, s) in zip(w, self.terms))

    def hess(self, t, X):
        X = calculus.as_points(X)
        w = self._weights(t, len(X))
        return sum(wk[:, None, None] * s.hess(X) for wk, (_, s) in zip(w, self.terms))

    def derivatives(self, t, X):
        X = calculus.as_points(X)
        g = np.zeros(X.shape)
        H = np.zeros(X.shape + (X.shape[1],))
        for wk, (_, spatial) in zip(self._weights(t, len(X)), self.terms):
            gk, Hk = spatial.derivatives(X)
            g += wk[:, None] * gk
            H += wk[:, None, None] * Hk
        return g, H


def separable(spatial, structure, profile=1.0, description=""):
    return TermsHamiltonian([(profile, spatial)], structure, description=description)


def zero(dimension, structure):
    return separable(Zero(dimension), structure, description="zero")


# -- built-in families ---------------------------------------------------------

DEFAULT_INNER = 3.0
DEFAULT_OUTER = 4.0


def default_plateau(dimension, inner=DEFAULT_INNER, outer=DEFAULT_OUTER):
    return Plateau(Box.cube(inner, dimension), Box.cube(outer, dimension))


def coordinate_plateau(dimension, structure, index, scale=1.0, plateau=None, profile=1.0,
                       offset=0.0):
    """``scale * (x_index - offset) * plateau(x)``."""
    plateau = plateau or default_plateau(dimension)
    spatial = Product(Affine(dimension, index, scale, offset), plateau)
    return separable(spatial, structure, profile,
                     description=f"coordinate{{{index + 1}}}*plateau scale={scale:g}")


def translation(dimension, structure, speed, generator_index=None, plateau=None, profile=1.0):
    """Plateau-cut linear Hamiltonian ``-speed * x_j``.

    On the standard plane with ``j = 2`` (the ``y`` coordinate) this pushes
    the plateau along ``+x`` at ``speed``.
    """
    j = dimension - 1 if generator_index is None else generator_index
    ham = coordinate_plateau(dimension, structure, j, -speed, plateau, profile)
    ham.description = f"translation{{{speed:g}}}"
    return ham


def bump(structure, center, radius, height=1.0, profile=1.0):
    spatial = Bump(center, radius, height)
    return separable(spatial, structure, profile,
                     description=f"bump{{c={[round(float(c), 6) for c in center]},r={radius:g},h={height:g}}}")


def rotation(structure, center, rate, plateau, profile=1.0):
    spatial = Product(Quadratic(center, rate), plateau)
    return separable(spatial, structure, profile, description=f"rotation{{{rate:g}}}")


def custom(structure, dimension, text, plateau=None, profile=1.0):
    plateau = plateau or default_plateau(dimension)
    spatial = Product(ExpressionFunction(text, dimension), plateau)
    return separable(spatial, structure, profile, description=f"custom{{{text}}}")
