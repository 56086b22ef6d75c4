import numpy as np
import pytest
from hypothesis import given, strategies as st

from hoferlab import calculus, hamiltonians as hm
from hoferlab.errors import ContractViolation
from hoferlab.hamiltonians import Box


@given(st.floats(-0.5, 1.5))
def test_smooth_step_range_and_ends(u):
    s, ds, _ = hm.smooth_step(np.array([u]))
    assert 0.0 <= s[0] <= 1.0 and ds[0] >= 0.0
    if u <= 0:
        assert s[0] == 0.0
    if u >= 1:
        assert s[0] == 1.0


def test_smooth_step_derivatives():
    u = np.linspace(0.05, 0.95, 19)
    s, ds, d2s = hm.smooth_step(u)
    h = 1e-6
    assert np.allclose(ds, (hm.smooth_step(u + h)[0] - hm.smooth_step(u - h)[0]) / (2 * h),
                       atol=1e-6)
    assert np.allclose(d2s, (hm.smooth_step(u + h)[1] - hm.smooth_step(u - h)[1]) / (2 * h),
                       atol=1e-4)
    assert np.allclose(s + s[::-1], 1.0)


SPATIAL = [
    hm.Plateau(Box.cube(0.5, 2), Box.cube(1.0, 2)),
    hm.Bump([0.1, -0.2], 0.9, 1.3),
    hm.Product(hm.Affine(2, 1, -1.2), hm.Plateau(Box.cube(0.5, 2), Box.cube(1.0, 2))),
    hm.Product(hm.Quadratic([0.1, 0.0], 1.5), hm.Plateau(Box.cube(0.5, 2), Box.cube(1.0, 2))),
    hm.ExpressionFunction("sin(x1)*x2**2", 2),
    hm.Sum([hm.Bump([0.5, 0.0], 0.4), hm.Bump([-0.5, 0.0], 0.4)], [1.0, -0.5]),
]


@pytest.mark.parametrize("S", SPATIAL, ids=lambda S: type(S).__name__)
def test_analytic_derivatives_match_differences(S, rng):
    X = rng.uniform(-1.1, 1.1, (40, 2))
    g = S.grad(X)
    assert np.allclose(g, calculus.fd_gradient(S.value, X), atol=1e-6)
    assert np.allclose(S.hess(X), calculus.fd_jacobian(S.grad, X), atol=1e-5)
    g2, H2 = S.derivatives(X)
    assert np.allclose(g2, g) and np.allclose(H2, S.hess(X))


def test_plateau_values():
    P = hm.Plateau(Box.cube(1.0, 2), Box.cube(2.0, 2))
    assert np.allclose(P.value(np.array([[0.0, 0.0], [0.9, -1.0]])), 1.0)
    assert np.allclose(P.value(np.array([[2.0, 0.0], [3.0, 3.0]])), 0.0)
    with pytest.raises(ContractViolation):
        hm.Plateau(Box.cube(1.0, 2), Box.cube(1.0, 2))


@pytest.mark.parametrize("F", [
    hm.bump("symplectic2n:1", [0.2, 0.1], 0.7, 2.0, "sin(t)"),
    hm.translation(2, "symplectic2n:1", 1.2),
    hm.rotation("symplectic2n:1", [0.0, 0.0], 2.0, hm.default_plateau(2, 1.0, 1.5)),
    hm.custom("symplectic2n:1", 2, "x1*x2", hm.default_plateau(2, 1.0, 1.5), "1 + t"),
])
def test_family_vanishes_off_support(F):
    assert F.compact
    assert F.check_support() == 0.0


def test_terms_hamiltonian_time_profiles():
    F = hm.TermsHamiltonian([("t", hm.Bump([0, 0], 1.0)), (2.0, hm.Bump([0, 0], 1.0))],
                            "symplectic2n:1")
    X = np.zeros((2, 2))
    assert np.allclose(F.value(np.array([0.0, 1.0]), X), [2.0, 3.0])
    g, H = F.derivatives(0.5, np.array([[0.2, 0.1]]))
    assert np.allclose(g, F.grad(0.5, np.array([[0.2, 0.1]])))
    assert np.allclose(H, F.hess(0.5, np.array([[0.2, 0.1]])))


def test_translation_generator():
    F = hm.translation(2, "symplectic2n:1", 1.5)
    assert F(0.0, np.array([0.3, 0.4])) == pytest.approx(-1.5 * 0.4)


def test_box_operations():
    a, b = Box((0, 0), (1, 1)), Box((0.5, -1), (2, 0.5))
    assert a.union(b) == Box((0, -1), (2, 1))
    assert a.intersect(b) == Box((0.5, 0), (1, 0.5))
    assert a.intersect(Box((3, 3), (4, 4))) is None
    assert len(a.corners()) == 4
    assert np.all(a.contains(a.boundary_points(5)))
    with pytest.raises(ContractViolation):
        Box((1,), (0,))
