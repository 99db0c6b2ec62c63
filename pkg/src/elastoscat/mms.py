"""Manufactured solutions for convergence checks of the volume discretization.

A smooth field ``u*`` is pushed through the operator symbolically,
``f = div(C : grad u*) + omega^2 rho u*``, and the problem is solved on the
whole truncated disk with ``u*`` prescribed on the truncation circle. A
single material fills every region so ``u*`` is an exact solution of the
discrete problem's continuous counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
import sympy as sy

from .materials import ElasticTensor, ExteriorConstants, MaterialScene
from .mesh import SceneGeometry, build_scene_mesh
from .norms import relative_h1_error
from .tags import Condition, Region


@dataclass(frozen=True)
class ManufacturedSolution:
    """Numerical callables for ``u*``, its gradient and the matching source."""

    value: Callable
    gradient: Callable
    source: Callable

    def exact(self, x):
        return self.value(x), self.gradient(x)


def _default_field(x, y):
    return (
        sy.sin(sy.pi * x / 2) * sy.cos(sy.pi * y / 3) + sy.I * x * y / 4,
        sy.cos(sy.pi * (x + y) / 4) - sy.I * sy.sin(sy.pi * y / 2) / 2,
    )


def manufactured_solution(tensor: ElasticTensor, rho: complex, omega: float,
                          field=_default_field) -> ManufacturedSolution:
    """Build ``u*`` from ``field(x, y) -> (u1, u2)`` (sympy expressions) and derive ``f``."""
    x, y = sy.symbols("x y", real=True)
    X = (x, y)
    u = [sy.sympify(c) for c in field(x, y)]
    C = tensor.table
    grad = [[sy.diff(u[i], X[j]) for j in range(2)] for i in range(2)]
    f = []
    for i in range(2):
        div = 0
        for j in range(2):
            sig_ij = sum(sy.nsimplify(C[i, j, k, l]) * grad[k][l] for k in range(2) for l in range(2))
            div += sy.diff(sig_ij, X[j])
        f.append(sy.simplify(div + sy.nsimplify(omega) ** 2 * sy.nsimplify(rho) * u[i]))
    fu = sy.lambdify(X, u, "numpy")
    fg = sy.lambdify(X, grad, "numpy")
    ff = sy.lambdify(X, f, "numpy")

    def _vec(fn, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = fn(pts[:, 0], pts[:, 1])
        return np.stack([np.broadcast_to(np.asarray(c, dtype=complex), pts.shape[:1]) for c in out], axis=-1)

    def value(pts):
        return _vec(fu, pts)

    def gradient(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        g = fg(pts[:, 0], pts[:, 1])
        return np.stack([np.stack([np.broadcast_to(np.asarray(c, dtype=complex), (len(pts),)) for c in row], axis=-1)
                         for row in g], axis=-2)

    def source(pts):
        return _vec(ff, pts)

    return ManufacturedSolution(value, gradient, source)


@dataclass
class ConvergenceRecord:
    degree: int
    h: Tuple[float, ...]
    errors: Tuple[float, ...]
    slope: float
    seconds: float


def mms_convergence(ext: ExteriorConstants, geom: SceneGeometry, degree: int, hs: Sequence[float],
                    field=_default_field) -> ConvergenceRecord:
    """Relative ``H^1`` errors of the manufactured problem on a mesh sequence and their log-log slope."""
    import time

    from .experiments import fit_loglog_slope
    from .fem import ScatteringProblem, solve_problem

    t0 = time.perf_counter()
    ms = manufactured_solution(ext.tensor, ext.rho, ext.omega, field)
    scene = MaterialScene.homogeneous(ext).with_obstacle(ext.tensor, ext.rho)
    errors = []
    for h in hs:
        mesh = build_scene_mesh(geom, h)
        prob = ScatteringProblem(mesh=mesh, materials=scene, condition=Condition.NONE, source=ms.source,
                                 dirichlet=ms.value, degree=degree,
                                 source_regions=(Region.D, Region.ANNULUS, Region.SHELL))
        sol = solve_problem(prob, keep_system=False)
        errors.append(relative_h1_error(sol.field, ms.exact))
    fit = fit_loglog_slope(list(zip(hs, errors)))
    return ConvergenceRecord(degree, tuple(hs), tuple(errors), fit.slope, time.perf_counter() - t0)


def dyadic(h0: float, refinements: int = 3) -> Tuple[float, ...]:
    return tuple(h0 / 2**k for k in range(refinements + 1))


__all__ = ["ManufacturedSolution", "manufactured_solution", "ConvergenceRecord", "mms_convergence", "dyadic"]
