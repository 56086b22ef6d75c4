import numpy as np
import pytest

from hoferlab import flows, hamiltonians as hm, poisson
from hoferlab.errors import ContractViolation

BIG = hm.default_plateau(2)          # 1 on [-3, 3]^2


def shear(a, profile=1.0):
    """``a * y * plateau``: moves x at speed ``-a``, keeps y."""
    return hm.coordinate_plateau(2, "symplectic2n:1", 1, a, BIG, profile)


@pytest.fixture
def F():
    return hm.bump("symplectic2n:1", [0.1, -0.1], 0.9, 0.3, "1 + 0.3*sin(t)")


@pytest.fixture
def H():
    return hm.bump("symplectic2n:1", [-0.2, 0.2], 0.8, -0.25, "cos(t)")


def sample(rng, m=12, w=1.0):
    return rng.uniform(-w, w, (m, 2))


# -- isotopies ----------------------------------------------------------------------------


def test_time_zero_is_identity(plane, F, rng):
    X = sample(rng)
    assert np.array_equal(flows.integrate(plane, F).evaluate(0.0, X), X)


def test_points_off_support_are_fixed(plane, F):
    X = np.array([[5.0, 5.0], [-1.2, 0.0]])
    assert np.array_equal(flows.integrate(plane, F).evaluate(1.0, X), X)


def test_round_trip(plane, F, rng):
    iso = flows.integrate(plane, F)
    X = sample(rng)
    back = iso.evaluate_inverse(0.7, iso.evaluate(0.7, X))
    assert np.max(np.abs(back - X)) < 10 * iso.spec.tolerance


def test_translation_oracle(plane):
    iso = flows.integrate(plane, shear(1.0))
    traj = iso.trajectory([0.25, 0.5, 1.0], [0.0, 0.0])
    assert np.allclose(traj, [[-0.25, 0], [-0.5, 0], [-1.0, 0]], atol=1e-8, rtol=0)


def test_heisenberg_linear_oracle():
    P = poisson.heisenberg3()
    F = hm.coordinate_plateau(3, P.label, 0)
    c = -0.6
    t = np.array([0.1, 0.6, 1.0])
    traj = flows.integrate(P, F).trajectory(t, [0.0, 0.0, c])
    assert np.allclose(traj, np.stack([0 * t, c * t, 0 * t + c], axis=1), atol=1e-8, rtol=0)


def test_transport_jacobian_matches_differences(plane, F, rng):
    iso = flows.integrate(plane, F)
    X = sample(rng, 4, 0.5)
    _, J = iso.transport_jacobian(X, 0.0, 1.0)
    h = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        col = (iso.evaluate(1.0, X + e) - iso.evaluate(1.0, X - e)) / (2 * h)
        assert np.allclose(J[:, :, k], col, atol=1e-6)


def test_structure_mismatch(plane):
    with pytest.raises(ContractViolation):
        flows.integrate(plane, hm.bump("heisenberg3", [0, 0, 0], 1.0))
    with pytest.raises(ContractViolation):
        flows.integrate(plane, hm.bump("symplectic2n:1", [0, 0, 0], 1.0))


def test_casimir_drift():
    for label in ("heisenberg3", "product2x1"):
        P = poisson.get_structure(label)
        F = hm.custom(label, 3, "sin(x1)*x2 + x3*x1", hm.default_plateau(3, 1.5, 2.0), "1 + t")
        X = np.random.default_rng(1).uniform(-1, 1, (10, 3))
        Y = flows.integrate(P, F).evaluate(1.0, X)
        assert np.max(np.abs(Y[:, 2] - X[:, 2])) < 1e-8


def test_autonomous_energy_conserved(plane, rng):
    S = hm.Product(hm.ExpressionFunction("x1**2*x2 + sin(x2)", 2), hm.default_plateau(2, 1.5, 2.0))
    F = hm.separable(S, plane.label)
    X = sample(rng)
    Y = flows.integrate(plane, F).evaluate(1.0, X)
    assert np.max(np.abs(S.value(Y) - S.value(X))) < 1e-7


# -- algebra of Hamiltonians ------------------------------------------------------------------


def test_compose_of_shears_adds(plane, rng):
    G = flows.compose(plane, shear(0.7), shear(-0.2))
    X = sample(rng, 10, 1.0)
    assert np.allclose(G.value(0.5, X), 0.5 * X[:, 1], atol=1e-9)


def test_inverse_of_shear_negates(plane, rng):
    Fbar = flows.inverse(plane, shear(0.7))
    X = sample(rng, 10, 1.0)
    assert np.allclose(Fbar.value(0.8, X), -0.7 * X[:, 1], atol=1e-9)


def test_pullback_by_translation_shifts_bump(plane, rng):
    f = flows.integrate(plane, shear(-1.0)).endpoint()      # (x, y) -> (x + 1, y)
    B = hm.bump(plane.label, [0.5, 0.0], 0.8)
    X = sample(rng, 10, 1.0)
    shifted = hm.Bump([-0.5, 0.0], 0.8).value(X)
    assert np.allclose(flows.pullback(f, B).value(0.0, X), shifted, atol=1e-8)


def test_composite_gradients_match_differences(plane, F, H, rng):
    X = sample(rng, 5, 0.8)
    f = flows.integrate(plane, H).endpoint()
    for G in (flows.compose(plane, F, H), flows.inverse(plane, F), flows.pullback(f, F)):
        h = 1e-5
        fd = np.stack([(G.value(0.6, X + h * e) - G.value(0.6, X - h * e)) / (2 * h)
                       for e in np.eye(2)], axis=1)
        assert np.allclose(G.grad(0.6, X), fd, atol=1e-6)


def test_group_laws_endpoints(plane, F, H, rng):
    X = sample(rng, 10, 0.9)
    phiF = flows.integrate(plane, F).endpoint()
    phiH = flows.integrate(plane, H).endpoint()
    comp = flows.integrate(plane, flows.compose(plane, F, H)).evaluate(1.0, X)
    assert np.max(np.abs(comp - phiF(phiH(X)))) < 1e-6
    inv = flows.integrate(plane, flows.inverse(plane, F)).evaluate(1.0, phiF(X))
    assert np.max(np.abs(inv - X)) < 1e-6
    conj = flows.integrate(plane, flows.pullback(phiH, F)).evaluate(1.0, X)
    assert np.max(np.abs(conj - phiH.inverse(phiF(phiH(X))))) < 1e-6


def test_composite_supports(plane, F, H):
    assert flows.compose(plane, F, H).support == F.support.union(H.support)
    assert flows.inverse(plane, F).support == F.support


def test_compose_contracts(plane, F):
    with pytest.raises(ContractViolation):
        flows.compose(plane, F, hm.bump("heisenberg3", [0, 0, 0], 1.0))
    with pytest.raises(ContractViolation):
        flows.pullback(lambda x: x, F)


# -- reparametrization ------------------------------------------------------------------------


SIGMAS = {
    "identity": (lambda t: t, lambda t: np.ones_like(t)),
    "square": (lambda t: t**2, lambda t: 2 * t),
    "cosine": (lambda t: 0.5 * (1 - np.cos(np.pi * t)), lambda t: 0.5 * np.pi * np.sin(np.pi * t)),
}


@pytest.mark.parametrize("name", SIGMAS)
def test_reparametrized_endpoint(plane, F, rng, name):
    s, ds = SIGMAS[name]
    X = sample(rng, 10, 0.9)
    a = flows.integrate(plane, F).evaluate(1.0, X)
    b = flows.integrate(plane, flows.reparametrize(F, s, ds)).evaluate(1.0, X)
    assert np.max(np.abs(a - b)) < 1e-6


def test_reparametrized_generic_hamiltonian(plane, F, H, rng):
    G = flows.inverse(plane, F)
    R = flows.reparametrize(G, lambda t: t**2, lambda t: 2 * t)
    assert isinstance(R, flows.ReparametrizedHamiltonian)
    X = sample(rng, 4, 0.5)
    assert np.allclose(R.value(0.5, X), 1.0 * G.value(0.25, X))


def test_reparametrize_contracts(F):
    with pytest.raises(ContractViolation):
        flows.reparametrize(F, lambda t: 0.5 * t, lambda t: 0.5 + 0 * t)
    with pytest.raises(ContractViolation):
        flows.reparametrize(F, lambda t: np.sin(np.pi * t / 2) ** 2 * (1 - 4 * t * (1 - t)),
                            lambda t: np.ones_like(t) * -1)
    with pytest.raises(ContractViolation):
        flows.flatten_boundary(F, 0.6)


def test_flatten_boundary(plane, rng):
    F = shear(1.0, "1 + t")
    G = flows.flatten_boundary(F, 0.1)
    X = sample(rng, 10, 0.5)
    iso, orig = flows.integrate(plane, G), flows.integrate(plane, F)
    assert np.max(np.abs(iso.evaluate(1.0, X) - orig.evaluate(1.0, X))) < 1e-6
    assert np.array_equal(iso.evaluate(0.05, X), X)
    assert np.all(G.value(np.array([0.0, 0.05, 0.1, 0.9, 0.95, 1.0]),
                          np.ones((6, 2)) * 0.3) == 0.0)
