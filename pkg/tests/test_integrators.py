import numpy as np
import pytest
from scipy.integrate import RK45, solve_ivp

from hoferlab import integrators
from hoferlab.errors import ContractViolation, IntegrationError
from hoferlab.integrators import IntegratorSpec, transport


def rotation_field(T, Y):
    return np.stack([-Y[:, 1], Y[:, 0]], axis=-1)


def test_dormand_prince_tableau_matches_scipy():
    assert np.allclose(integrators._C, RK45.C)
    assert np.allclose(integrators._A_DP[:, :RK45.A.shape[1]], RK45.A)
    assert np.allclose(integrators._B, RK45.B)
    # scipy stores the embedded difference with the opposite sign
    assert np.allclose(integrators._E, -RK45.E)


@pytest.mark.parametrize("method", ["rk45", "rk4"])
def test_rotation_closed_form(method):
    spec = IntegratorSpec(method=method, steps=400)
    X = np.array([[1.0, 0.0], [0.3, -0.4], [0.0, 2.0]])
    t = 1.3
    out = transport(rotation_field, X, 0.0, t, spec)
    c, s = np.cos(t), np.sin(t)
    exact = X @ np.array([[c, s], [-s, c]])
    assert np.max(np.abs(out - exact)) < 1e-9


def test_per_point_time_intervals():
    X = np.array([[1.0, 0.0]] * 3)
    t1 = np.array([0.5, 1.0, -0.7])
    out = transport(rotation_field, X, 0.0, t1)
    assert np.allclose(out, np.stack([np.cos(t1), np.sin(t1)], axis=-1), atol=1e-9)


def test_zero_length_interval_is_identity():
    X = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(transport(rotation_field, X, 0.4, 0.4), X)


def test_batch_does_not_couple_trajectories():
    """A stiff-ish trajectory must not change the steps of an easy one."""

    def field(T, Y):
        return np.stack([-Y[:, 1], Y[:, 0]], axis=-1) * (1.0 + 20.0 * Y[:, :1] ** 2)

    easy = np.array([[0.01, 0.0]])
    hard = np.array([[1.0, 0.0]])
    alone = transport(field, easy, 0.0, 1.0)
    together = transport(field, np.concatenate([easy, hard]), 0.0, 1.0)
    assert np.allclose(alone, together[:1], rtol=0, atol=1e-15)


def test_nonlinear_against_solve_ivp():
    def pend(T, Y):
        return np.stack([Y[:, 1], -np.sin(Y[:, 0])], axis=-1)

    y0 = np.array([2.0, 0.3])
    ref = solve_ivp(lambda t, y: [y[1], -np.sin(y[0])], (0, 3), y0, rtol=1e-12, atol=1e-12,
                    method="DOP853").y[:, -1]
    out = transport(pend, y0[None], 0.0, 3.0)[0]
    assert np.max(np.abs(out - ref)) < 1e-8


def test_blow_up_raises_with_location():
    def blow(T, Y):
        return Y**2

    with pytest.raises(IntegrationError) as info:
        transport(blow, np.array([[1.0]]), 0.0, 2.0)
    assert info.value.t is not None and info.value.t < 1.01


def test_step_budget():
    with pytest.raises(IntegrationError):
        transport(rotation_field, np.array([[1.0, 0.0]]), 0.0, 50.0,
                  IntegratorSpec(max_steps=5))


def test_spec_validation():
    with pytest.raises(ContractViolation):
        IntegratorSpec(method="euler")
    with pytest.raises(ContractViolation):
        IntegratorSpec(rtol=0.0)
    with pytest.raises(ContractViolation):
        IntegratorSpec(method="rk4", steps=0)
    assert IntegratorSpec().tolerance == 1e-10
