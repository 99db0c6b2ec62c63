"""Quadrature rules and Lagrange shape functions on the reference triangle.

The reference triangle has vertices (0,0), (1,0), (0,1). Triangle rules are
conical products of Gauss-Legendre and Gauss-Jacobi(1, 0) nodes (the
Duffy collapse), exact for polynomials of degree ``2n - 1``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n: int):
    """Conical product rule with ``n*n`` points, exact to degree ``2n - 1``.

    Returns ``(points (n*n, 2), weights (n*n,))``; weights sum to 1/2.
    """
    # x = (1 - s) t collapses the square; the (1 - s) Jacobian is absorbed by Gauss-Jacobi
    sj, wj = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (sj + 1.0)
    ws = 0.25 * wj
    t, wt = gauss_legendre(n)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.stack([(1.0 - S) * T, S], axis=-1).reshape(-1, 2)
    return pts, W.ravel()


def rule_for_degree(degree: int):
    """Smallest conical rule exact for polynomials of the given degree."""
    n = max(1, (degree + 2) // 2)
    return triangle_rule(n)


# ---------------------------------------------------------------------------
# Lagrange elements. P2 node order: v0, v1, v2, m01, m12, m20.
# ---------------------------------------------------------------------------
def shape_functions(degree: int, pts) -> np.ndarray:
    """Values ``(npts, nloc)`` at reference points."""
    x, y = np.asarray(pts, dtype=float).T
    l0, l1, l2 = 1.0 - x - y, x, y
    if degree == 1:
        return np.stack([l0, l1, l2], axis=-1)
    if degree == 2:
        return np.stack([
            l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
            4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
        ], axis=-1)
    raise ValueError(f"unsupported element degree {degree}")


def shape_gradients(degree: int, pts) -> np.ndarray:
    """Reference gradients ``(npts, nloc, 2)``."""
    x, y = np.asarray(pts, dtype=float).T
    l0, l1, l2 = 1.0 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return np.broadcast_to(dl, (x.size, 3, 2)).copy()
    if degree == 2:
        lam = [l0, l1, l2]
        out = np.empty((x.size, 6, 2))
        for a in range(3):
            out[:, a, :] = (4 * lam[a] - 1)[:, None] * dl[a]
        for m, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
            out[:, 3 + m, :] = 4 * (lam[a][:, None] * dl[b] + lam[b][:, None] * dl[a])
        return out
    raise ValueError(f"unsupported element degree {degree}")


def edge_shape_functions(degree: int, t) -> np.ndarray:
    """1D Lagrange values along an edge, parameter ``t`` in [0, 1].

    Order: start, end (, midpoint for degree 2).
    """
    t = np.asarray(t, dtype=float)
    if degree == 1:
        return np.stack([1 - t, t], axis=-1)
    if degree == 2:
        return np.stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)], axis=-1)
    raise ValueError(f"unsupported element degree {degree}")


def local_nodes(degree: int) -> np.ndarray:
    """Reference coordinates of the local nodes."""
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return v
    m = 0.5 * (v + v[[1, 2, 0]])
    return np.vstack([v, m])
