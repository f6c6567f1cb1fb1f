"""Chebyshev-Gauss-Lobatto nodes with differentiation, integration and interpolation matrices."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C


def cgl_nodes(n: int, T: float) -> np.ndarray:
    """Ascending Chebyshev-Gauss-Lobatto nodes on [0, T]."""
    j = np.arange(n)
    return 0.5 * T * (1.0 - np.cos(np.pi * j / (n - 1)))


@lru_cache(maxsize=32)
def _weights(n: int) -> np.ndarray:
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def diff_matrix(n: int, T: float) -> np.ndarray:
    x = cgl_nodes(n, T)
    w = _weights(n)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    D[np.diag_indices(n)] = -D.sum(axis=1)
    return D


@lru_cache(maxsize=32)
def _unit_integration(n: int) -> np.ndarray:
    x = cgl_nodes(n, 2.0) - 1.0
    V = C.chebvander(x, n - 1)
    coef = np.linalg.solve(V, np.eye(n))
    ic = C.chebint(coef, lbnd=-1.0, axis=0)
    return C.chebvander(x, n) @ ic


def integration_matrix(n: int, T: float) -> np.ndarray:
    """Q with (Q f)_i = int_0^{t_i} p(t) dt for the interpolant p of f."""
    return 0.5 * T * _unit_integration(n)


def interp_matrix(n: int, T: float, targets) -> np.ndarray:
    """Barycentric interpolation from the n nodes on [0, T] to ``targets``."""
    x = cgl_nodes(n, T)
    w = _weights(n)
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    d = t[:, None] - x[None, :]
    exact = np.isclose(d, 0.0, atol=1e-15 * max(T, 1.0), rtol=0)
    d = np.where(exact, 1.0, d)
    M = w[None, :] / d
    M /= M.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    if rows.any():
        M[rows] = exact[rows].astype(float)
    return M
