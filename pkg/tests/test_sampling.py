import numpy as np
import pytest
from hypothesis import given, strategies as st

from hoferlab.errors import ContractViolation
from hoferlab.hamiltonians import Box
from hoferlab.sampling import LATTICE_BUDGET, Ball, BoxRegion, Sampler, as_region


@given(st.integers(1, 5), st.floats(0.1, 2.0))
def test_ball_sample_inside(n, r):
    pts, cell = Sampler(halton=200, boundary=32).sample(Ball((0.3,) * n, r))
    d = np.linalg.norm(pts - 0.3, axis=1)
    assert np.all(d <= r * (1 + 1e-12))
    assert cell > 0


def test_ball_boundary_on_sphere():
    for n in (2, 3, 4):
        B = Ball((0.0,) * n, 0.7)
        pts = B.boundary(50, seed=1)
        assert np.allclose(np.linalg.norm(pts, axis=1), 0.7)


def test_signed_distance():
    B = Ball((0.0, 0.0), 1.0)
    assert np.allclose(B.signed_distance(np.array([[0, 0], [2, 0]])), [-1.0, 1.0])
    R = BoxRegion(Box((0, 0), (2, 2)))
    assert np.allclose(R.signed_distance(np.array([[1, 1], [3, 1], [0.5, 1.0]])), [-1, 1, -0.5])


def test_sampler_deterministic():
    a = Sampler(seed=4).sample(Ball((0, 0, 0), 0.5))[0]
    b = Sampler(seed=4).sample(Ball((0, 0, 0), 0.5))[0]
    assert np.array_equal(a, b)


def test_lattice_budget():
    s = Sampler(lattice=33)
    for n in range(1, 7):
        assert s.lattice_size(n) ** n <= LATTICE_BUDGET or s.lattice_size(n) == 3


def test_as_region():
    assert isinstance(as_region({"center": [0, 0], "radius": 1}), Ball)
    assert isinstance(as_region({"lo": [0, 0], "hi": [1, 1]}), BoxRegion)
    with pytest.raises(ContractViolation):
        as_region("disk")
    with pytest.raises(ContractViolation):
        Ball((0, 0), -1)
    assert Ball((0, 0), 0).empty
