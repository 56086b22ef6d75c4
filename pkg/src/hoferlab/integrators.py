"""Batched explicit Runge-Kutta integration of Hamiltonian flows.

Every trajectory in a batch carries its own start and end time; the system
is rescaled to ``s in [0, 1]`` with ``x' = (t1 - t0) * X(t0 + s (t1 - t0), x)``
so trajectories with different time intervals share one vectorized loop.
The adaptive Dormand-Prince 5(4) scheme keeps a separate step size per
trajectory and controls the max-norm error of each one; the fixed-step RK4
uses one step sequence for the whole batch, which keeps difference quotients
taken through it smooth.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, IntegrationError

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# fifth-order minus embedded fourth-order weights (last entry multiplies f(y_new))
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


METHODS = ("rk45", "rk4")


@dataclass(frozen=True)
class IntegratorSpec:
    method: str = "rk45"
    rtol: float = 1e-10
    atol: float = 1e-10
    steps: int = 128
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractViolation(f"unknown integrator method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ContractViolation("integrator tolerances must be positive")
        if self.steps < 1:
            raise ContractViolation("rk4 needs at least one step")

    @property
    def tolerance(self):
        return max(self.rtol, self.atol)


DEFAULT_SPEC = IntegratorSpec()


def transport(field, X, t0, t1, spec=DEFAULT_SPEC):
    """Carry points ``X`` along ``field(T, Y)`` from times ``t0`` to ``t1``.

    ``field`` takes per-point times ``T`` of shape ``(m,)`` and points
    ``(m, n)`` and returns velocities ``(m, n)``.
    """
    X = np.array(X, dtype=float, copy=True)
    m = len(X)
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (m,)).copy()
    t1 = np.broadcast_to(np.asarray(t1, dtype=float), (m,)).copy()
    dt = t1 - t0
    if m == 0 or not np.any(dt != 0.0):
        return X

    def rhs(idx, s, Y):
        V = field(t0[idx] + s * dt[idx], Y)
        return dt[idx, None] * V

    if spec.method == "rk4":
        return _rk4(rhs, X, spec.steps)
    return _embedded(rhs, X, spec, t0, dt, DP45)


def _rk4(rhs, Y, steps):
    h = 1.0 / steps
    idx = np.arange(len(Y))
    for k in range(steps):
        s = np.full(len(Y), k * h)
        k1 = rhs(idx, s, Y)
        k2 = rhs(idx, s + h / 2, Y + h / 2 * k1)
        k3 = rhs(idx, s + h / 2, Y + h / 2 * k2)
        k4 = rhs(idx, s + h, Y + h * k3)
        Y = Y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return Y


class _Tableau:
    """Explicit embedded pair with a last-stage (FSAL) error term."""

    def __init__(self, A, B, C, order, error):
        self.A, self.B, self.C = A, B, C
        self.stages = len(B)
        self.exponent = -1.0 / (order + 1)
        self.error = error          # (K, H, scale) -> per-point error ratio


def _dp45_error(K, H, scale):
    err = H * (_E @ K.reshape(len(K), -1)).reshape(K.shape[1:])
    return np.max(np.abs(err) / scale, axis=1)


_A_DP = np.zeros((6, 6))
for _i, _row in enumerate(_A):
    _A_DP[_i, :len(_row)] = _row

DP45 = _Tableau(_A_DP, _B, _C, 4, _dp45_error)


def _embedded(rhs, Y, spec, t0, dt, tab):
    """Embedded Runge-Kutta with an independent step size per trajectory."""
    m = len(Y)
    s = np.zeros(m)
    h = np.full(m, 0.05)
    steps = np.zeros(m, dtype=int)
    f0 = rhs(np.arange(m), s, Y)
    active = np.ones(m, dtype=bool)

    def fail(reason, idx):
        raise IntegrationError(reason, t=float(t0[idx] + s[idx] * dt[idx]), x=Y[idx])

    while np.any(active):
        idx = np.nonzero(active)[0]
        s_i, y_i = s[idx], Y[idx]
        remaining = 1.0 - s_i
        hh = np.minimum(h[idx], remaining)
        if np.any(hh < 1e-14):
            fail("step size underflow", idx[np.argmin(hh)])
        if np.any(steps[idx] >= spec.max_steps):
            fail("step budget exhausted", idx[np.argmax(steps[idx])])
        H = hh[:, None]
        K = np.empty((tab.stages + 1,) + y_i.shape)
        K[0] = f0[idx]
        flat = K.reshape(len(K), -1)
        for i in range(1, tab.stages):
            incr = (tab.A[i, :i] @ flat[:i]).reshape(y_i.shape)
            K[i] = rhs(idx, s_i + tab.C[i] * hh, y_i + H * incr)
        y_new = y_i + H * (tab.B @ flat[:tab.stages]).reshape(y_i.shape)
        finite = np.all(np.isfinite(y_new), axis=1)
        if not np.all(finite):
            fail("non-finite state", idx[np.nonzero(~finite)[0][0]])
        K[-1] = rhs(idx, s_i + hh, y_new)
        scale = spec.atol + spec.rtol * np.maximum(np.abs(y_i), np.abs(y_new))
        err = tab.error(K, H, scale)
        steps[idx] += 1
        ok = err <= 1.0
        acc = idx[ok]
        s[acc] = np.where(hh[ok] >= remaining[ok], 1.0, s_i[ok] + hh[ok])
        Y[acc] = y_new[ok]
        f0[acc] = K[-1][ok]
        with np.errstate(divide="ignore"):
            grow = np.where(err == 0.0, 5.0, 0.9 * err ** tab.exponent)
        h[idx] = hh * np.where(ok, np.minimum(5.0, grow), np.clip(grow, 0.2, 1.0))
        active = s < 1.0
    return Y
