import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hoferlab import hamiltonians as hm, poisson
from hoferlab.errors import ContractViolation, NumericDomainError, UnsupportedGeometry

finite = st.floats(-2.0, 2.0, allow_nan=False)
point3 = arrays(float, 3, elements=finite)

BUILTINS = ["symplectic2n:1", "symplectic2n:2", "symplectic2n:3", "heisenberg3", "product2x1"]


# -- musical map ----------------------------------------------------------------


def test_sharp_dx_is_d_dy(plane):
    assert np.allclose(poisson.sharp(plane, [0.3, -1.2], [1.0, 0.0]), [0.0, 1.0])


def test_sharp_dy_is_minus_d_dx(plane):
    assert np.allclose(poisson.sharp(plane, [0.0, 0.0], [0.0, 1.0]), [-1.0, 0.0])


def test_sharp_heisenberg():
    P = poisson.heisenberg3()
    assert np.allclose(poisson.sharp(P, [0.0, 0.0, 1.7], [1.0, 0.0, 0.0]), [0.0, 1.7, 0.0])


def test_sharp_pairing_is_bivector(rng):
    P = poisson.heisenberg3()
    x, a, b = rng.normal(size=(3, 3))
    lhs = b @ poisson.sharp(P, x, a)
    assert lhs == pytest.approx(a @ P.matrix(x)[0] @ b, abs=1e-14)


def test_sharp_dimension_mismatch(plane):
    with pytest.raises(ContractViolation):
        poisson.sharp(plane, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0])


# -- brackets and fields -----------------------------------------------------------


def test_heisenberg_coordinate_bracket():
    P = poisson.heisenberg3()
    assert poisson.bracket(P, "x1", "x2", [0.4, -1.0, 2.5]) == pytest.approx(2.5)
    assert poisson.bracket(P, "x2", "x1", [0.4, -1.0, 2.5]) == pytest.approx(-2.5)
    assert poisson.bracket(P, "x1", "x3", [0.4, -1.0, 2.5]) == 0.0


def test_field_of_y_on_plane(plane):
    assert np.allclose(poisson.hamiltonian_field(plane, "x2", [0.5, 0.5]), [-1.0, 0.0])


def test_field_of_x1_on_heisenberg():
    P = poisson.heisenberg3()
    assert np.allclose(poisson.hamiltonian_field(P, "x1", [0.2, 0.3, -0.8]), [0.0, -0.8, 0.0])


def test_field_differentiates(rng):
    """``{F, H} = X_F H``."""
    P = poisson.heisenberg3()
    F, H = "sin(x1)*x3 + x2**2", "x1*x2 - exp(x3)"
    X = rng.uniform(-1, 1, (20, 3))
    lhs = poisson.bracket(P, F, H, X)
    rhs = np.einsum("mi,mi->m", poisson.hamiltonian_field(P, F, X),
                    poisson.as_function(H, 3).grad(X))
    assert np.allclose(lhs, rhs, atol=1e-12)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_nonfinite_gradient_raises(plane):
    with pytest.raises(NumericDomainError):
        poisson.bracket(plane, lambda x: np.inf, "x1", [0.0, 0.0])


@given(point3)
def test_bracket_antisymmetric(x):
    P = poisson.heisenberg3()
    F, H = "x1*x3 + sin(x2)", "x2*x1**2"
    assert poisson.bracket(P, F, H, x) == -poisson.bracket(P, H, F, x)


@given(point3)
def test_leibniz_rule(x):
    P = poisson.heisenberg3()
    F, G, H = "x1**2 + x3", "sin(x2)", "x1*x2"
    lhs = poisson.bracket(P, F, "sin(x2)*x1*x2", x)
    rhs = (poisson.bracket(P, F, G, x) * poisson.as_function(H, 3)(x)
           + poisson.as_function(G, 3)(x) * poisson.bracket(P, F, H, x))
    assert lhs == pytest.approx(rhs, abs=1e-10)


@given(point3, st.sampled_from(["x1", "x2*x1", "sin(x1)*exp(x2)"]))
def test_casimirs_commute(x, f):
    for label in ("heisenberg3", "product2x1"):
        P = poisson.get_structure(label)
        for c in P.casimirs:
            assert poisson.bracket(P, c, f, x) == 0.0


# -- Jacobi identity -------------------------------------------------------------------


@pytest.mark.parametrize("label", BUILTINS)
def test_builtin_structures_satisfy_jacobi(label, rng):
    P = poisson.get_structure(label)
    X = rng.uniform(-2, 2, (200, P.dimension))
    assert np.max(poisson.coordinate_jacobi_residual(P, X)) < 1e-9


def test_heisenberg_triple_by_hand():
    P = poisson.heisenberg3()
    assert poisson.jacobi_residual(P, "x1", "x2", "x3", [0.3, 0.1, -0.7]) < 1e-12


def test_jacobi_on_nonlinear_functions(rng):
    P = poisson.heisenberg3()
    X = rng.uniform(-1, 1, (30, 3))
    res = poisson.jacobi_residual(P, "sin(x1)*x2", "x3*x1**2", "exp(x2) + x1*x3", X)
    assert np.max(res) < 1e-9


def test_negative_control_violates_jacobi(rng):
    P = poisson.nonpoisson_control()
    res = poisson.coordinate_jacobi_residual(P, rng.uniform(-2, 2, (100, 3)))
    assert np.allclose(res, 2.0)


def test_listed_corrupted_bivector_is_actually_poisson(rng):
    # x1 d1^d2 + d2^d3 corresponds to v = (1, 0, x1) with v . curl v = 0,
    # so it cannot serve as a negative control.
    P = poisson.custom({"1,2": "x1", "2,3": "1"}, 3)
    res = poisson.coordinate_jacobi_residual(P, rng.uniform(-2, 2, (50, 3)))
    assert np.max(res) < 1e-12


def test_custom_structure_matches_heisenberg(rng):
    X = rng.normal(size=(10, 3))
    P = poisson.custom({"1,2": "x3"}, 3)
    assert np.allclose(P.matrix(X), poisson.heisenberg3().matrix(X))
    assert np.allclose(P.jacobian(X), poisson.heisenberg3().jacobian(X))


def test_custom_full_matrix_must_be_antisymmetric():
    with pytest.raises(ContractViolation):
        poisson.custom([["0", "x1"], ["x1", "0"]])
    P = poisson.custom([["0", "1"], ["-1", "0"]])
    assert P.constant


def test_labels():
    with pytest.raises(ContractViolation):
        poisson.get_structure("sympletic:2")
    with pytest.raises(ContractViolation):
        poisson.get_structure("custom")
    assert poisson.get_structure("symplectic2n:2").dimension == 4


def test_symplectic_blocks():
    L = poisson.standard_symplectic(2).matrix(np.zeros(4))[0]
    assert np.allclose(L, -L.T)
    assert np.allclose(L @ L, -np.eye(4))


# -- leaves ------------------------------------------------------------------------------


def test_heisenberg_leaf_at_zero_center_is_a_point():
    leaf = poisson.leaf_at(poisson.heisenberg3(), [0.4, -1.0, 0.0])
    assert leaf.dimension == 0


@pytest.mark.parametrize("c", [0.5, -1.0, 3.0])
def test_heisenberg_leaf_symplectic_form(c):
    leaf = poisson.leaf_at(poisson.heisenberg3(), [0.0, 0.0, c])
    assert leaf.dimension == 2 and leaf.proper
    assert np.allclose(leaf.sigma, -leaf.sigma.T)
    assert np.allclose(leaf.sigma @ leaf.restricted_bivector, np.eye(2), atol=1e-10)
    assert abs(leaf.sigma[0, 1]) == pytest.approx(1.0 / abs(c))


@given(point3)
def test_leaf_dimension_is_rank(x):
    for label in ("heisenberg3", "product2x1"):
        P = poisson.get_structure(label)
        leaf = poisson.leaf_at(P, x)
        assert leaf.dimension == np.linalg.matrix_rank(P.matrix(x)[0], tol=1e-12 * max(1, abs(x[2])))
        if leaf.dimension:
            assert np.allclose(leaf.sigma @ leaf.restricted_bivector, np.eye(2), atol=1e-10)


def test_symplectic_leaf_is_everything():
    leaf = poisson.leaf_at(poisson.standard_symplectic(2), np.zeros(4))
    assert leaf.dimension == 4


def test_product_restriction_substitutes_z(rng):
    z = hm.Affine(3, 2)
    lifted = hm.Product(hm.ExpressionFunction("exp(-(x1 - 0.1)**2)", 3), z)
    F = hm.separable(lifted, "product2x1")
    leaf = poisson.leaf_at(poisson.product2x1(), [0.0, 0.0, 1.0])
    FL = poisson.restrict_to_leaf(F, leaf)
    U = rng.uniform(-1, 1, (20, 2))
    assert np.allclose(FL.value(0.0, U), np.exp(-(U[:, 0] - 0.1) ** 2))


def test_heisenberg_restriction_of_x1_times_bump(rng):
    c = 0.7
    spatial = hm.Product(hm.Affine(3, 0), hm.Bump([0.0, 0.0, c], 1.0))
    F = hm.separable(spatial, "heisenberg3")
    leaf = poisson.leaf_at(poisson.heisenberg3(), [0.0, 0.0, c])
    FL = poisson.restrict_to_leaf(F, leaf)
    U = rng.uniform(-0.8, 0.8, (20, 2))
    expected = U[:, 0] * hm.Bump([0.0, 0.0], 1.0).value(U)
    assert np.allclose(FL.value(0.3, U), expected)


def test_restriction_contracts():
    P = poisson.heisenberg3()
    F = hm.bump(P.label, [0, 0, 1], 0.5)
    with pytest.raises(ContractViolation):
        poisson.restrict_to_leaf(F, poisson.leaf_at(P, [0.0, 0.0, 0.0]))
    C = poisson.custom({"1,2": "x3"}, 3)
    with pytest.raises(UnsupportedGeometry):
        poisson.restrict_to_leaf(hm.bump("custom", [0, 0, 1], 0.5), poisson.leaf_at(C, [0, 0, 1]))
