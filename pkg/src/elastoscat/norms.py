"""Volume and boundary norms of displacement fields.

Boundary Sobolev norms on circles use the modal weight ``(1 + k^2)^s``
scaled by the circumference:

    ||u||_{H^s} = ( 2 pi R sum_k (1 + k^2)^s sum_j |c_k^(j)|^2 )^{1/2},

so ``s = 0`` is the ``L^2`` norm by Parseval.
"""

from __future__ import annotations

import math

import numpy as np

SUPPORTED_S = (-0.5, 0.0, 0.5)


def sobolev_from_coefficients(coeffs, s: float, radius: float) -> float:
    """Modal ``H^s`` norm from Fourier coefficients ``coeffs[k + N, j]``."""
    if s not in SUPPORTED_S:
        raise ValueError(f"unsupported Sobolev index {s!r}; use one of {SUPPORTED_S}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = np.asarray(coeffs)
    if c.ndim == 1:
        c = c[:, None]
    n = (c.shape[0] - 1) // 2
    if c.shape[0] != 2 * n + 1:
        raise ValueError("coefficient array must have odd length 2N+1")
    k = np.arange(-n, n + 1)
    w = (1.0 + k.astype(float) ** 2) ** s
    total = math.fsum((w * np.sum(np.abs(c) ** 2, axis=1)).tolist())
    return math.sqrt(2 * math.pi * radius * total)


def sobolev_boundary_norm(coeffs, s: float, radius: float) -> float:
    """Modal ``H^s`` norm on a circle, ``s`` in {-1/2, 0, 1/2}."""
    return sobolev_from_coefficients(coeffs, s, radius)


NORM_RULE = 5  # conical rule exact to degree 9


def _region_cells(mesh, regions):
    from .tags import Region

    if regions is None:
        return np.ones(mesh.n_triangles, dtype=bool)
    regs = []
    for r in np.atleast_1d(regions):
        try:
            regs.append(Region(r))
        except ValueError:
            raise ValueError(f"unknown region label {r!r}") from None
    return mesh.region_mask(regs)


def h1_densities(u, regions=None, exact=None, rule: int = NORM_RULE, with_reference: bool = False):
    """Per-element ``int |e|^2`` and ``int |grad e|^2`` with ``e = u - exact``.

    ``exact(points) -> (values (n, 2), gradients (n, 2, 2))`` is optional.
    With ``with_reference`` the same two densities of ``exact`` alone are
    returned as well (one evaluation of ``exact`` serves both).
    """
    from .quadrature import triangle_rule

    space = u.space
    cells = np.nonzero(_region_cells(space.mesh, regions))[0]
    pts, w = triangle_rule(rule)
    _, det, _ = space.jacobians
    out_u = np.zeros(cells.size)
    out_g = np.zeros(cells.size)
    ref_u = np.zeros(cells.size)
    ref_g = np.zeros(cells.size)
    chunk = 8192
    for s in range(0, cells.size, chunk):
        sel = cells[s:s + chunk]
        val, grad = space.evaluate(u.values, pts, sel, gradient=True)
        if exact is not None:
            x = space.map_points(pts, sel)
            ev, eg = exact(x.reshape(-1, 2))
            ev = np.asarray(ev).reshape(val.shape)
            eg = np.asarray(eg).reshape(grad.shape)
            val = val - ev
            grad = grad - eg
        wd = np.abs(det[sel])[:, None] * w[None, :]
        if with_reference:
            ref_u[s:s + chunk] = np.sum(wd * np.sum(np.abs(ev) ** 2, axis=-1), axis=1)
            ref_g[s:s + chunk] = np.sum(wd * np.sum(np.abs(eg) ** 2, axis=(-2, -1)), axis=1)
        out_u[s:s + chunk] = np.sum(wd * np.sum(np.abs(val) ** 2, axis=-1), axis=1)
        out_g[s:s + chunk] = np.sum(wd * np.sum(np.abs(grad) ** 2, axis=(-2, -1)), axis=1)
    if with_reference:
        return out_u, out_g, ref_u, ref_g
    return out_u, out_g


def h1_norm(u, regions=None, exact=None) -> float:
    """Broken ``H^1`` norm ``(sum_T int_T |u|^2 + |grad u|^2)^{1/2}`` over the given regions.

    With ``exact`` the norm of ``u - exact`` is returned. Element
    contributions are summed with ``math.fsum`` so the result does not depend
    on the summation order.
    """
    a, b = h1_densities(u, regions, exact)
    return math.sqrt(math.fsum(a.tolist()) + math.fsum(b.tolist()))


def relative_h1_error(u, exact, regions=None) -> float:
    """``||u - exact||_{H^1} / ||exact||_{H^1}`` with a single evaluation of ``exact``."""
    a, b, c, d = h1_densities(u, regions, exact, with_reference=True)
    num = math.fsum(a.tolist()) + math.fsum(b.tolist())
    den = math.fsum(c.tolist()) + math.fsum(d.tolist())
    return math.sqrt(num / den)


def l2_norm(u, regions=None, exact=None) -> float:
    a, _ = h1_densities(u, regions, exact)
    return math.sqrt(math.fsum(a.tolist()))


def boundary_trace(u, tag):
    """Angles and nodal values of the trace on a tagged curve, sorted by angle."""
    nodes = u.space.boundary_nodes(tag)
    p = u.space.points[nodes]
    th = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)
    order = np.argsort(th)
    return th[order], u.values[nodes[order]], nodes[order]


def boundary_modal_coeffs(u, tag, N: int) -> np.ndarray:
    """Trapezoid-rule Fourier coefficients ``c[k + N, j]`` of the Cartesian trace on a circle."""
    from .dtn import fourier_coefficients

    if not u.mesh.is_circle(tag):
        raise ValueError("modal coefficients need a circular boundary")
    th, vals, _ = boundary_trace(u, tag)
    return fourier_coefficients(th, vals, N)


def boundary_l2_norm(values_by_node, space, tag, rule: int = 6) -> float:
    """``L^2`` norm on a tagged polyline of the piecewise-polynomial interpolant of nodal values."""
    from .quadrature import edge_shape_functions, gauss_legendre

    en = space.edge_nodes(tag)
    t, w = gauss_legendre(rule)
    N = edge_shape_functions(space.degree, t)
    loc = np.asarray(values_by_node)[en]  # (ne, nloc, 2)
    v = np.einsum("qa,eai->eqi", N, loc)
    d = space.points[en[:, 1]] - space.points[en[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    per = L * np.sum(w[None, :] * np.sum(np.abs(v) ** 2, axis=-1), axis=1)
    return math.sqrt(math.fsum(per.tolist()))
