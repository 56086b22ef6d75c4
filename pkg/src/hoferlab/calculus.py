"""Batched central differences.

Every function here takes a batched evaluator ``f`` mapping an ``(m, n)``
array of points to an ``(m,)`` array and evaluates the whole stencil in a
single call, so evaluators that integrate ODEs internally see one batch and
one step sequence for all stencil points.
"""

import numpy as np

GRADIENT_STEP = 1e-5
HESSIAN_STEP = 1e-4


def as_points(x):
    X = np.asarray(x, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def step_sizes(X, scale=GRADIENT_STEP):
    """Per-point step ``scale * (1 + |x|)``."""
    return scale * (1.0 + np.linalg.norm(X, axis=-1))


def broadcast_times(t, m):
    t = np.asarray(t, dtype=float)
    if t.shape == (m,):
        return t
    return np.full(m, t) if t.ndim == 0 else np.broadcast_to(t, (m,))


def fd_gradient(f, X, scale=GRADIENT_STEP):
    X = as_points(X)
    m, n = X.shape
    h = step_sizes(X, scale)
    offsets = np.eye(n)[None, :, :] * h[:, None, None]          # (m, n, n)
    stencil = np.concatenate([X[:, None, :] + offsets, X[:, None, :] - offsets], axis=1)
    values = np.asarray(f(stencil.reshape(-1, n))).reshape(m, 2 * n)
    return (values[:, :n] - values[:, n:]) / (2.0 * h[:, None])


def fd_jacobian(f, X, scale=GRADIENT_STEP):
    """Jacobian of a batched map ``(m, n) -> (m, k)``; returns ``(m, k, n)``."""
    X = as_points(X)
    m, n = X.shape
    h = step_sizes(X, scale)
    offsets = np.eye(n)[None, :, :] * h[:, None, None]
    stencil = np.concatenate([X[:, None, :] + offsets, X[:, None, :] - offsets], axis=1)
    values = np.asarray(f(stencil.reshape(-1, n)))
    values = values.reshape(m, 2 * n, -1)
    diff = (values[:, :n, :] - values[:, n:, :]) / (2.0 * h[:, None, None])
    return np.swapaxes(diff, 1, 2)


def fd_hessian(f, X, scale=HESSIAN_STEP):
    """Second derivatives from values only (4-point mixed stencil)."""
    X = as_points(X)
    m, n = X.shape
    h = step_sizes(X, scale)
    eye = np.eye(n)
    points = [X]
    for i in range(n):
        points += [X + h[:, None] * eye[i], X - h[:, None] * eye[i]]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            points.append(X + h[:, None] * (si * eye[i] + sj * eye[j]))
    stacked = np.stack(points, axis=1)                           # (m, k, n)
    vals = np.asarray(f(stacked.reshape(-1, n))).reshape(m, -1)
    f0 = vals[:, 0]
    H = np.empty((m, n, n))
    for i in range(n):
        fp, fm = vals[:, 1 + 2 * i], vals[:, 2 + 2 * i]
        H[:, i, i] = (fp - 2.0 * f0 + fm) / h**2
    base = 1 + 2 * n
    for k, (i, j) in enumerate(pairs):
        pp, pm, mp, mm = (vals[:, base + 4 * k + q] for q in range(4))
        H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4.0 * h**2)
    return H, f0
