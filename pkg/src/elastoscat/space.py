"""Lagrange P1/P2 vector function spaces on a :class:`Mesh`.

Space nodes are the mesh vertices followed (for P2) by one midpoint per
mesh edge. Degrees of freedom are numbered ``2 * node + component``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .mesh import Mesh
from .quadrature import shape_functions, shape_gradients
from .tags import Boundary, Region


class FunctionSpace:
    def __init__(self, mesh: Mesh, degree: int = 2):
        if degree not in (1, 2):
            raise ValueError("element degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        nv = mesh.n_nodes
        if degree == 1:
            self.cells = mesh.triangles.copy()
            self.points = mesh.points.copy()
            self._edge_mid = None
        else:
            uniq, tri_edges = mesh.all_edges()
            self.cells = np.hstack([mesh.triangles, nv + tri_edges])
            mid = 0.5 * (mesh.points[uniq[:, 0]] + mesh.points[uniq[:, 1]])
            self.points = np.vstack([mesh.points, mid])
            self._edge_index = {tuple(e): i for i, e in enumerate(uniq.tolist())}
        self.cells.setflags(write=False)
        self.points.setflags(write=False)
        self._tree = None

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_local(self) -> int:
        return self.cells.shape[1]

    def midpoint_of(self, a: int, b: int) -> int:
        return self.mesh.n_nodes + self._edge_index[(min(a, b), max(a, b))]

    def edge_nodes(self, tag) -> np.ndarray:
        """Per tagged edge: (start, end[, midpoint]) space node ids, in curve order."""
        e = self.mesh.tagged_edges(tag)
        if self.degree == 1:
            return e.copy()
        mids = np.array([self.midpoint_of(a, b) for a, b in e.tolist()], dtype=np.int64)
        return np.hstack([e, mids[:, None]])

    def boundary_nodes(self, tag) -> np.ndarray:
        """All space nodes on a tagged curve (vertices and, for P2, midpoints)."""
        return np.unique(self.edge_nodes(tag).ravel())

    def nodes_of_cells(self, mask) -> np.ndarray:
        return np.unique(self.cells[mask].ravel())

    # ----- element geometry -------------------------------------------------
    @cached_property
    def jacobians(self):
        """``(J, detJ, invJ)`` of the affine maps, ``J = [x1 - x0, x2 - x0]``."""
        p = self.mesh.points[self.mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        return J, det, inv

    def map_points(self, ref_pts, cells=None) -> np.ndarray:
        """Physical coordinates ``(ne, nq, 2)`` of reference points."""
        J, _, _ = self.jacobians
        x0 = self.mesh.points[self.mesh.triangles[:, 0]]
        if cells is not None:
            J, x0 = J[cells], x0[cells]
        return x0[:, None, :] + np.einsum("eij,qj->eqi", J, np.asarray(ref_pts))

    def basis(self, ref_pts, cells=None):
        """Values ``(nq, nloc)`` and physical gradients ``(ne, nq, nloc, 2)``."""
        _, _, inv = self.jacobians
        if cells is not None:
            inv = inv[cells]
        N = shape_functions(self.degree, ref_pts)
        G = shape_gradients(self.degree, ref_pts)
        return N, np.einsum("qak,ekj->eqaj", G, inv)

    def evaluate(self, values, ref_pts, cells=None, gradient=False):
        """Field values ``(ne, nq, 2)`` (and gradients ``(ne, nq, 2, 2)``) at reference points."""
        c = self.cells if cells is None else self.cells[cells]
        loc = np.asarray(values)[c]  # (ne, nloc, 2)
        N, G = self.basis(ref_pts, cells)
        u = np.einsum("qa,eai->eqi", N, loc)
        if not gradient:
            return u
        g = np.einsum("eqaj,eai->eqij", G, loc)
        return u, g

    def locate(self, points, candidates: int = 8):
        """Containing cell and reference coordinates of each point.

        Searches the ``candidates`` cells with the nearest centroids; raises if
        a point lies in none of them (outside the mesh).
        """
        from scipy.spatial import cKDTree

        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            self._tree = cKDTree(self.mesh.points[self.mesh.triangles].mean(axis=1))
        _, near = self._tree.query(x, k=min(candidates, self.mesh.n_triangles))
        near = near.reshape(len(x), -1)
        _, _, inv = self.jacobians
        x0 = self.mesh.points[self.mesh.triangles[:, 0]]
        ref = np.einsum("nkij,nkj->nki", inv[near], x[:, None, :] - x0[near])
        bary = np.concatenate([1.0 - ref.sum(axis=-1, keepdims=True), ref], axis=-1)
        slack = bary.min(axis=-1)
        best = np.argmax(slack, axis=1)
        rows = np.arange(len(x))
        if np.any(slack[rows, best] < -1e-10):
            raise ValueError("point outside the mesh")
        return near[rows, best], ref[rows, best]

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant of ``fn(points) -> (n, 2)``."""
        return np.asarray(fn(self.points), dtype=complex).reshape(self.n_nodes, 2)


@dataclass
class DisplacementField:
    """Complex 2-vector per space node; ``active`` marks nodes of the solved region."""

    space: FunctionSpace
    values: np.ndarray
    active: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.space.n_nodes, 2):
            raise ValueError(f"field shape {self.values.shape} does not match {self.space.n_nodes} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite entries")
        if self.active is None:
            self.active = np.ones(self.space.n_nodes, dtype=bool)

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def __sub__(self, other: "DisplacementField") -> "DisplacementField":
        if other.space is not self.space:
            raise ValueError("fields live on different spaces")
        return DisplacementField(self.space, self.values - other.values, self.active & other.active)

    def __mul__(self, alpha) -> "DisplacementField":
        return DisplacementField(self.space, alpha * self.values, self.active.copy())

    __rmul__ = __mul__

    def at(self, points) -> np.ndarray:
        """Values ``(n, 2)`` at arbitrary points inside the mesh."""
        cells, ref = self.space.locate(points)
        N = shape_functions(self.space.degree, ref)  # (n, nloc)
        return np.einsum("na,nai->ni", N, self.values[self.space.cells[cells]])

    def __add__(self, other: "DisplacementField") -> "DisplacementField":
        if other.space is not self.space:
            raise ValueError("fields live on different spaces")
        return DisplacementField(self.space, self.values + other.values, self.active & other.active)
