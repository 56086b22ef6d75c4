"""Regions ``U`` and deterministic dense samples of them.

A sample is the union of boundary points, an interior lattice and a seeded
scrambled Halton set.  The lattice spacing is the resolution below which a
displacement margin is not trusted.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, qmc

from .errors import ContractViolation
from .hamiltonians import Box, as_box

LATTICE_BUDGET = 20_000


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ContractViolation("ball radius must be non-negative")

    @property
    def dimension(self):
        return len(self.center)

    @property
    def empty(self):
        return self.radius == 0.0

    @property
    def bounding_box(self):
        return Box.cube(self.radius, self.dimension, self.center)

    def contains(self, X):
        return self.signed_distance(X) < 0.0

    def signed_distance(self, X):
        """Distance to the closed ball, negative inside."""
        X = np.atleast_2d(X)
        return np.linalg.norm(X - np.asarray(self.center), axis=-1) - self.radius

    def boundary(self, count, seed):
        c = np.asarray(self.center)
        if self.dimension == 1:
            return c + np.array([[-self.radius], [self.radius]])
        if self.dimension == 2:
            a = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
            return c + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)
        u = qmc.Halton(d=self.dimension, scramble=True, seed=seed).random(count)
        g = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
        return c + self.radius * g / np.linalg.norm(g, axis=-1, keepdims=True)

    def describe(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class BoxRegion:
    box: Box

    def __post_init__(self):
        object.__setattr__(self, "box", as_box(self.box))

    @property
    def dimension(self):
        return self.box.dimension

    @property
    def empty(self):
        return bool(np.any(self.box.widths == 0.0))

    @property
    def bounding_box(self):
        return self.box

    def contains(self, X):
        return self.signed_distance(X) < 0.0

    def signed_distance(self, X):
        X = np.atleast_2d(X)
        lo, hi = self.box.low, self.box.high
        outside = np.linalg.norm(np.maximum(0.0, np.maximum(lo - X, X - hi)), axis=-1)
        inside = np.min(np.minimum(X - lo, hi - X), axis=-1)
        return np.where(outside > 0.0, outside, -np.maximum(inside, 0.0))

    def boundary(self, count, seed):
        per_axis = max(2, int(round(count ** (1.0 / max(1, self.dimension - 1)))))
        return self.box.boundary_points(per_axis)

    def describe(self):
        return {"kind": "box", "lo": list(self.box.lo), "hi": list(self.box.hi)}


def as_region(spec):
    """Regions from objects or plain mappings (``center``/``radius`` or ``lo``/``hi``)."""
    if isinstance(spec, (Ball, BoxRegion)):
        return spec
    if isinstance(spec, Box):
        return BoxRegion(spec)
    if isinstance(spec, dict):
        if "radius" in spec:
            return Ball(spec["center"], spec["radius"])
        if "lo" in spec:
            return BoxRegion(Box(tuple(spec["lo"]), tuple(spec["hi"])))
    raise ContractViolation(f"cannot interpret region {spec!r}")


@dataclass(frozen=True)
class Sampler:
    lattice: int = 33
    halton: int = 1000
    boundary: int = 128
    seed: int = 0

    def lattice_size(self, dimension):
        k = self.lattice
        while k > 3 and k**dimension > LATTICE_BUDGET:
            k -= 1
        return k

    def sample(self, region):
        """Points of the region and the lattice cell size."""
        n = region.dimension
        box = region.bounding_box
        k = self.lattice_size(n)
        axes = [np.linspace(a, b, k) for a, b in zip(box.lo, box.hi)]
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
        lattice = grid[region.signed_distance(grid) <= 0.0]
        halton = self._halton(region)
        pts = np.concatenate([region.boundary(self.boundary, self.seed + 1), lattice, halton])
        cell = float(np.max(box.widths)) / (k - 1)
        return pts, cell

    def _halton(self, region):
        n = region.dimension
        box = region.bounding_box
        engine = qmc.Halton(d=n, scramble=True, seed=self.seed)
        kept = []
        total = 0
        while total < self.halton:
            cand = box.low + engine.random(max(64, 2 * self.halton)) * box.widths
            cand = cand[region.signed_distance(cand) <= 0.0]
            kept.append(cand)
            total += len(cand)
        return np.concatenate(kept)[: self.halton]


__all__ = ["Ball", "BoxRegion", "Sampler", "as_region"]
