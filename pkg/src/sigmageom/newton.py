"""Batched damped Gauss-Newton for small nonlinear systems.

Each row of ``x0`` is an independent start. Steps are minimum-norm
(pseudo-inverse), so under- and over-determined systems are handled alike,
and a backtracking line search keeps the residual norm decreasing. Rows are
iterated until they stop improving, not merely until they pass a tolerance:
tangential roots (rank-deficient Jacobian at the solution) converge only
linearly and would otherwise be left far from the root.

Rows never interact, so splitting the starts across workers cannot change
any result.
"""
from __future__ import annotations

import numpy as np

from .sampling import map_blocks

MAX_ITER = 200
MAX_HALVINGS = 40
RCOND = 1e-14


def fd_jacobian(fun, x, step: float = 1e-7):
    """Central-difference Jacobian, shape ``(S, k, m)``."""
    m = x.shape[1]
    cols = []
    h = step * np.maximum(1.0, np.abs(x))
    for i in range(m):
        xp = x.copy()
        xm = x.copy()
        xp[:, i] += h[:, i]
        xm[:, i] -= h[:, i]
        cols.append((fun(xp) - fun(xm)) / (2.0 * h[:, i : i + 1]))
    return np.stack(cols, axis=-1)


def _solve_rows(fun, jac, x0, data, max_iter):
    # fun/jac take (x, data) where data rows align with x rows
    x = np.array(x0, dtype=float)
    r = fun(x, data)
    f = np.sum(r * r, axis=-1)
    active = np.isfinite(f)
    f = np.where(active, f, np.inf)
    for _ in range(max_iter):
        idx = np.flatnonzero(active & (f > 0.0))
        if idx.size == 0:
            break
        xa, ra, fa = x[idx], r[idx], f[idx]
        da = None if data is None else data[idx]
        if jac is not None:
            J = jac(xa, da)
        else:
            J = fd_jacobian(lambda z: fun(z, da), xa)
        step = -np.matmul(np.linalg.pinv(J, rcond=RCOND), ra[..., None])[..., 0]
        t = np.ones(idx.size)
        pending = np.arange(idx.size)
        improved = np.zeros(idx.size, dtype=bool)
        for _ in range(MAX_HALVINGS):
            xn = xa[pending] + t[pending, None] * step[pending]
            rn = fun(xn, None if da is None else da[pending])
            fn = np.sum(rn * rn, axis=-1)
            ok = np.isfinite(fn) & (fn < fa[pending])
            good = pending[ok]
            xa[good], ra[good], fa[good] = xn[ok], rn[ok], fn[ok]
            improved[good] = True
            pending = pending[~ok]
            if pending.size == 0:
                break
            t[pending] *= 0.5
        x[idx], r[idx], f[idx] = xa, ra, fa
        active[idx[~improved]] = False
    return x, r


def gauss_newton(fun, x0, jac=None, *, data=None, max_iter: int = MAX_ITER, workers: int = 1, block: int = 256):
    """Run damped Gauss-Newton from every row of ``x0``.

    ``fun(x)`` maps ``(S, m)`` to ``(S, k)``; ``jac(x)`` (optional) to
    ``(S, k, m)``. When ``data`` is given, each row carries its own problem
    and the callables are invoked as ``fun(x, data_rows)``.
    Returns final points and residual vectors.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[0] == 0:
        return x0.copy(), np.empty((0, 0))
    if data is None:
        f2 = lambda x, _d: fun(x)
        j2 = None if jac is None else (lambda x, _d: jac(x))
    else:
        data = np.asarray(data)
        f2, j2 = fun, jac

    def run(a, b):
        return _solve_rows(f2, j2, x0[a:b], None if data is None else data[a:b], max_iter)

    parts = map_blocks(run, x0.shape[0], workers, block)
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])
