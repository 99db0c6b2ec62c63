"""Assembly and solution of the truncated scattering problem.

The unknown is the total field ``u`` on the active part of ``B_r`` (all of
``B_r`` for a penetrable obstacle, ``B_r`` minus ``D`` otherwise). With
``u = u_in + u_s`` near ``dB_r`` and ``T u_s = Lambda u_s`` there, the weak
form reads

    int (C:grad u):grad phi* - omega^2 int rho u.phi* - int_{dB_r} (Lambda u).phi* ds
        = -int f.phi* + int_{dB_r} (T u_in - Lambda u_in).phi* ds.

The DtN term is kept sparse by adding the polar Fourier coefficients
``c = P u`` of the trace on ``dB_r`` as extra unknowns: the system is

    [ A    -2 pi r P^H Lambda ] [u]   [b]
    [ P    -I                 ] [c] = [0],

where ``P`` integrates the piecewise-polynomial trace against
``e^{-ik theta}`` in the angle parameterization of the boundary polyline.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dtn import DtnOperator, build_dtn, fourier_coefficients, polar_frame, to_polar
from .materials import ExteriorConstants, MaterialScene, effective_material
from .mesh import BoundaryLayer, Mesh, SceneGeometry, build_scene_mesh
from .modes import isotropic_traction
from .quadrature import edge_shape_functions, gauss_legendre, local_nodes, shape_gradients, triangle_rule
from .space import DisplacementField, FunctionSpace
from .tags import Boundary, Condition, Region
from .waves import IncidentField, POINT_SOURCE, eval_incident

ASSEMBLY_RULE = 3  # conical rule exact to degree 5 (P2 mass is degree 4)
EDGE_RULE = 8
RESIDUAL_TOL = 1e-10
_CHUNK = 16384


class ResonanceError(RuntimeError):
    """The discrete system is singular (probable eigenvalue or resonance)."""


@dataclass
class ScatteringProblem:
    """Everything needed to assemble one truncated scattering problem.

    Exactly one of ``dtn`` (radiating truncation) and ``dirichlet``
    (prescribed data on ``dB_r``, used for manufactured solutions) is given.
    ``source(x) -> (n, 2)`` is integrated over the elements of
    ``source_regions`` (the shell by default; manufactured solutions use all
    regions).
    """

    mesh: Mesh
    materials: MaterialScene
    condition: Condition
    incident: Optional[IncidentField] = None
    source: Optional[Callable] = None
    dtn: Optional[DtnOperator] = None
    dirichlet: Optional[Callable] = None
    degree: int = 2
    space: Optional[FunctionSpace] = None
    eps: Optional[float] = None
    case: Optional[int] = None
    source_regions: Tuple[Region, ...] = (Region.SHELL,)

    def __post_init__(self):
        self.condition = Condition(self.condition)
        self.source_regions = tuple(Region(r) for r in self.source_regions)
        if self.space is None:
            self.space = FunctionSpace(self.mesh, self.degree)
        elif self.space.mesh is not self.mesh or self.space.degree != self.degree:
            raise ValueError("function space does not match mesh/degree")
        if (self.dtn is None) == (self.dirichlet is None):
            raise ValueError("give exactly one of a DtN operator or Dirichlet data on the truncation boundary")
        if self.condition == Condition.NONE and not self.materials.has(Region.D):
            raise ValueError("penetrable run needs a material for region D")
        present = set(np.unique(self.mesh.regions[self.active_cells]).tolist())
        for reg in present:
            self.materials.get(Region(reg))
        if self.dtn is not None:
            r = self.mesh.circle_radius(Boundary.TRUNCATION)
            if abs(r - self.dtn.radius) > 1e-12 * r:
                raise ValueError(f"DtN radius {self.dtn.radius} does not match truncation radius {r}")
            if self.dtn.ext != self.materials.exterior:
                raise ValueError("DtN operator built for different exterior constants")
        if self.incident is not None:
            if self.incident.ext != self.materials.exterior:
                raise ValueError("incident field built for different exterior constants")
            if self.incident.kind == POINT_SOURCE:
                y = np.asarray(self.incident.location)
                if np.hypot(*y) <= self.mesh.circle_radius(Boundary.TRUNCATION):
                    raise ValueError("a point-source incident field must sit outside B_r; "
                                     "use a volume source for sources inside")

    @property
    def active_cells(self) -> np.ndarray:
        if self.condition == Condition.NONE:
            return np.ones(self.mesh.n_triangles, dtype=bool)
        return self.mesh.regions != int(Region.D)


@dataclass
class AssembledSystem:
    """Augmented sparse system; the first ``n_fem`` unknowns are free FEM dofs.

    ``free_dofs[i]`` is the global dof (``2 * node + component``) of FEM
    unknown ``i``; the remaining unknowns are polar trace coefficients.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_dofs: np.ndarray
    n_fem: int
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    active_nodes: np.ndarray
    problem: ScatteringProblem
    projection: Optional[sp.csr_matrix] = None
    dtn_matrix: Optional[sp.csr_matrix] = None
    incident_data: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.matrix.shape

    def bulk_symmetry_defect(self) -> float:
        """``||A - A^T|| / ||A||`` of the volume block (max-norm)."""
        A = self.matrix[: self.n_fem, : self.n_fem]
        D = A - A.T
        scale = abs(A).max()
        return float(abs(D).max() / scale) if D.nnz else 0.0


@dataclass
class Solution:
    """Total field, scattered field on the shell, and solve metadata."""

    problem: ScatteringProblem
    field: DisplacementField
    scattered: DisplacementField
    incident_values: np.ndarray
    modal: Optional[np.ndarray]
    residual: float
    stats: Dict[str, float]
    system: Optional[AssembledSystem] = None

    @property
    def space(self) -> FunctionSpace:
        return self.field.space

    @property
    def mesh(self) -> Mesh:
        return self.field.space.mesh


# ---------------------------------------------------------------------------
# element matrices
# ---------------------------------------------------------------------------
def element_matrices(space: FunctionSpace, cells, C_table, rho, omega):
    """Local matrices ``K - omega^2 rho M`` of shape ``(ne, 2 nloc, 2 nloc)``.

    Local dof ``2 a + i`` is component ``i`` of local node ``a``;
    ``K[(a,i),(b,j)] = int sum_kl C_ikjl d_k N_a d_l N_b``.
    """
    pts, w = triangle_rule(ASSEMBLY_RULE)
    N, G = space.basis(pts, cells)
    det = np.abs(space.jacobians[1][cells])
    S = np.einsum("q,eqak,eqbl->eakbl", w, G, G, optimize=True) * det[:, None, None, None, None]
    K = np.einsum("ikjl,eakbl->eaibj", C_table, S, optimize=True)
    Mref = np.einsum("q,qa,qb->ab", w, N, N)
    nl = N.shape[1]
    A = K.astype(complex)
    mass = (omega**2 * rho) * det[:, None, None] * Mref[None]
    for i in range(2):
        A[:, :, i, :, i] -= mass
    return A.reshape(len(cells), 2 * nl, 2 * nl)


def _cell_dofs(space, cells):
    c = space.cells[cells]
    return (2 * c[:, :, None] + np.arange(2)[None, None, :]).reshape(len(cells), -1)


def _source_load(space, cells, source):
    """``-int f.phi`` per local dof, shape ``(ne, 2 nloc)``."""
    pts, w = triangle_rule(ASSEMBLY_RULE)
    N = space.basis(pts, cells)[0]
    det = np.abs(space.jacobians[1][cells])
    x = space.map_points(pts, cells)
    f = np.asarray(source(x.reshape(-1, 2)), dtype=complex).reshape(len(cells), len(w), 2)
    loc = -np.einsum("q,e,qa,eqi->eai", w, det, N, f)
    return loc.reshape(len(cells), -1)


# ---------------------------------------------------------------------------
# boundary modal projection
# ---------------------------------------------------------------------------
def modal_projection(space: FunctionSpace, tag, order: int, nq: int = EDGE_RULE) -> sp.csr_matrix:
    """Matrix mapping nodal dofs to polar Fourier coefficients of the trace.

    Row ``2 (k + N) + p`` (``p`` = radial, angular) holds
    ``(1/2pi) int phi(theta) . e_p(theta) e^{-ik theta} d theta`` where the
    boundary polyline is parameterized by the polar angle.
    """
    en = space.edge_nodes(tag)
    P0 = space.points[en[:, 0]]
    P1 = space.points[en[:, 1]]
    t0 = np.arctan2(P0[:, 1], P0[:, 0])
    dt = np.mod(np.arctan2(P1[:, 1], P1[:, 0]) - t0, 2 * np.pi)
    s, ws = gauss_legendre(nq)
    th = t0[:, None] + dt[:, None] * s[None, :]  # (ne, nq)
    W = dt[:, None] * ws[None, :] / (2 * np.pi)
    d = np.stack([np.cos(th), np.sin(th)], axis=-1)
    e = (P1 - P0)[:, None, :]
    cross = lambda a, b: a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    tpar = -cross(P0[:, None, :], d) / cross(e, d)
    Nv = edge_shape_functions(space.degree, tpar)  # (ne, nq, nloc)
    c, sn = np.cos(th), np.sin(th)
    R = np.stack([np.stack([c, sn], -1), np.stack([-sn, c], -1)], -2)  # (ne, nq, p, comp)
    k = np.arange(-order, order + 1)
    E = np.exp(-1j * k[:, None, None] * th[None]) * W[None]  # (nk, ne, nq)
    vals = np.einsum("keq,eqa,eqpc->kpeac", E, Nv, R, optimize=True)
    nk = k.size
    rows = np.broadcast_to((2 * np.arange(nk)[:, None] + np.arange(2)[None, :])[:, :, None, None, None], vals.shape)
    cols = np.broadcast_to((2 * en[:, :, None] + np.arange(2)[None, None, :])[None, None], vals.shape)
    M = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * nk, space.n_dofs))
    return M.tocsr()


def dtn_block_matrix(op: DtnOperator) -> sp.csr_matrix:
    return sp.block_diag(list(op.blocks), format="csr")


def incident_boundary_data(incident: Optional[IncidentField], op: DtnOperator, n_samples: int = None):
    """Polar coefficients of ``T u_in - Lambda u_in`` on the truncation circle, shape ``(2N+1, 2)``."""
    nk = 2 * op.order + 1
    if incident is None:
        return np.zeros((nk, 2), dtype=complex)
    n = n_samples or max(512, 8 * op.order)
    th = 2 * np.pi * np.arange(n) / n
    er, _ = polar_frame(th)
    u, g = eval_incident(incident, op.radius * er, gradient=True)
    t = isotropic_traction(g, op.ext.lam, op.ext.mu, er)
    uc = fourier_coefficients(th, to_polar(th, u), op.order)
    tc = fourier_coefficients(th, to_polar(th, t), op.order)
    return tc - np.einsum("kab,kb->ka", op.blocks, uc)


def incident_modal_trace(incident, op: DtnOperator, n_samples: int = None):
    """Polar coefficients of ``u_in`` on the truncation circle."""
    nk = 2 * op.order + 1
    if incident is None:
        return np.zeros((nk, 2), dtype=complex)
    n = n_samples or max(512, 8 * op.order)
    th = 2 * np.pi * np.arange(n) / n
    er, _ = polar_frame(th)
    u = eval_incident(incident, op.radius * er)
    return fourier_coefficients(th, to_polar(th, u), op.order)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
def assemble(problem: ScatteringProblem) -> AssembledSystem:
    space = problem.space
    mesh = problem.mesh
    omega = problem.materials.exterior.omega
    active = problem.active_cells
    active_nodes = np.zeros(space.n_nodes, dtype=bool)
    active_nodes[space.cells[active].ravel()] = True

    # Dirichlet dofs: rigid obstacle and/or prescribed truncation data
    dvals = np.zeros(space.n_dofs, dtype=complex)
    is_dir = np.zeros(space.n_dofs, dtype=bool)
    if problem.condition == Condition.RIGID:
        nodes = space.boundary_nodes(Boundary.OBSTACLE)
        is_dir[2 * nodes] = is_dir[2 * nodes + 1] = True
    if problem.dirichlet is not None:
        nodes = space.boundary_nodes(Boundary.TRUNCATION)
        vals = np.asarray(problem.dirichlet(space.points[nodes]), dtype=complex).reshape(-1, 2)
        is_dir[2 * nodes] = is_dir[2 * nodes + 1] = True
        dvals[2 * nodes] = vals[:, 0]
        dvals[2 * nodes + 1] = vals[:, 1]
    act_dof = np.repeat(active_nodes, 2)
    free = np.nonzero(act_dof & ~is_dir)[0]
    fidx = -np.ones(space.n_dofs, dtype=np.int64)
    fidx[free] = np.arange(free.size)
    nf = free.size

    rows, cols, data = [], [], []
    rhs = np.zeros(nf, dtype=complex)
    for reg in (Region.D, Region.ANNULUS, Region.SHELL):
        cells_all = np.nonzero(active & (mesh.regions == int(reg)))[0]
        if cells_all.size == 0:
            continue
        tensor, rho = problem.materials.get(reg)
        for s in range(0, cells_all.size, _CHUNK):
            cells = cells_all[s:s + _CHUNK]
            Ae = element_matrices(space, cells, tensor.table, rho, omega)
            gd = _cell_dofs(space, cells)
            r = np.broadcast_to(gd[:, :, None], Ae.shape).ravel()
            c = np.broadcast_to(gd[:, None, :], Ae.shape).ravel()
            v = Ae.ravel()
            rf, cf = fidx[r], fidx[c]
            keep = (rf >= 0) & (cf >= 0)
            rows.append(rf[keep])
            cols.append(cf[keep])
            data.append(v[keep])
            lift = (rf >= 0) & (cf < 0) & is_dir[c]
            if np.any(lift):
                contrib = v[lift] * dvals[c[lift]]
                rhs -= np.bincount(rf[lift], weights=contrib.real, minlength=nf)
                rhs -= 1j * np.bincount(rf[lift], weights=contrib.imag, minlength=nf)
            if problem.source is not None and reg in problem.source_regions:
                fl = _source_load(space, cells, problem.source).ravel()
                gdf = fidx[gd.ravel()]
                ok = gdf >= 0
                rhs += np.bincount(gdf[ok], weights=fl[ok].real, minlength=nf)
                rhs += 1j * np.bincount(gdf[ok], weights=fl[ok].imag, minlength=nf)
    A = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(nf, nf)).tocsr()

    projection = lam_mat = gdata = None
    if problem.dtn is not None:
        op = problem.dtn
        radius = op.radius
        Pfull = modal_projection(space, Boundary.TRUNCATION, op.order)
        P = Pfull[:, free].tocsr()
        lam_mat = dtn_block_matrix(op)
        B = (-2 * np.pi * radius) * (P.conj().T @ lam_mat)
        nm = P.shape[0]
        A = sp.bmat([[A, B], [P, -sp.identity(nm, dtype=complex, format="csr")]], format="csr")
        gdata = incident_boundary_data(problem.incident, op)
        rhs = rhs + 2 * np.pi * radius * (P.conj().T @ gdata.ravel())
        rhs = np.concatenate([rhs, np.zeros(nm, dtype=complex)])
        projection = P
    A.sort_indices()
    return AssembledSystem(matrix=A, rhs=rhs, free_dofs=free, n_fem=nf,
                           dirichlet_dofs=np.nonzero(is_dir & act_dof)[0], dirichlet_values=dvals,
                           active_nodes=active_nodes, problem=problem, projection=projection,
                           dtn_matrix=lam_mat, incident_data=gdata)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------
def solve(system: AssembledSystem, keep_system: bool = True) -> Solution:
    """Sparse LU solve and reconstruction of the nodal field."""
    problem = system.problem
    space = problem.space
    A = system.matrix
    b = system.rhs
    stats = {"n_unknowns": float(A.shape[0]), "nnz": float(A.nnz), "n_fem": float(system.n_fem)}
    t0 = time.perf_counter()
    if not np.any(b):
        x = np.zeros(A.shape[0], dtype=complex)
        stats["lu_nnz"] = 0.0
    else:
        try:
            lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise ResonanceError(f"singular system, probable eigenvalue/resonance configuration: {exc}") from exc
        stats["lu_nnz"] = float(lu.L.nnz + lu.U.nnz)
        x = lu.solve(b)
    stats["solve_seconds"] = time.perf_counter() - t0
    bn = np.linalg.norm(b)
    residual = float(np.linalg.norm(A @ x - b) / bn) if bn > 0 else float(np.linalg.norm(A @ x))
    if not np.all(np.isfinite(x)):
        raise ResonanceError("non-finite solution, probable eigenvalue/resonance configuration")

    full = system.dirichlet_values.copy()
    full[system.free_dofs] = x[: system.n_fem]
    values = full.reshape(-1, 2)
    values[~system.active_nodes] = 0.0
    modal = x[system.n_fem:].reshape(-1, 2) if problem.dtn is not None else None

    inc = np.zeros_like(values)
    shell_nodes = space.nodes_of_cells(problem.mesh.regions == int(Region.SHELL))
    if problem.incident is not None:
        inc[shell_nodes] = eval_incident(problem.incident, space.points[shell_nodes])
    scat = np.zeros_like(values)
    scat[shell_nodes] = values[shell_nodes] - inc[shell_nodes]
    values[shell_nodes] = scat[shell_nodes] + inc[shell_nodes]
    shell_mask = np.zeros(space.n_nodes, dtype=bool)
    shell_mask[shell_nodes] = True
    fld = DisplacementField(space, values, system.active_nodes.copy())
    sfld = DisplacementField(space, scat, shell_mask)
    return Solution(problem=problem, field=fld, scattered=sfld, incident_values=inc, modal=modal,
                    residual=residual, stats=stats, system=system if keep_system else None)


def solve_problem(problem: ScatteringProblem, keep_system: bool = True) -> Solution:
    t0 = time.perf_counter()
    system = assemble(problem)
    t1 = time.perf_counter()
    sol = solve(system, keep_system=keep_system)
    sol.stats["assemble_seconds"] = t1 - t0
    sol.stats["total_seconds"] = time.perf_counter() - t0
    return sol


def solve_obstacle(scene: MaterialScene, geom: SceneGeometry, bc, incident=None, source=None,
                   h: float = 0.05, order: Optional[int] = None, degree: int = 2,
                   mesh: Optional[Mesh] = None, dtn: Optional[DtnOperator] = None,
                   space: Optional[FunctionSpace] = None, layer: Optional[BoundaryLayer] = None,
                   keep_system: bool = False) -> Solution:
    """Mesh, DtN, assembly and solve for a rigid or traction-free obstacle."""
    bc = Condition(bc)
    if bc not in (Condition.RIGID, Condition.TRACTION_FREE):
        raise ValueError("obstacle condition must be RIGID or TRACTION_FREE")
    mesh = mesh if mesh is not None else build_scene_mesh(geom, h, layer)
    dtn = dtn if dtn is not None else build_dtn(scene.exterior, geom.r, order)
    problem = ScatteringProblem(mesh=mesh, materials=scene.without_obstacle(), condition=bc,
                                incident=incident, source=source, dtn=dtn, degree=degree, space=space)
    return solve_problem(problem, keep_system=keep_system)


def solve_effective(scene: MaterialScene, geom: SceneGeometry, case: int, eps: float, params,
                    incident=None, source=None, h: float = 0.05, order: Optional[int] = None,
                    degree: int = 2, mesh: Optional[Mesh] = None, dtn: Optional[DtnOperator] = None,
                    space: Optional[FunctionSpace] = None, layer: Optional[BoundaryLayer] = None,
                    keep_system: bool = False) -> Solution:
    """Same pipeline with ``D`` filled by the effective medium of the given case."""
    lam0, mu0, eta0, tau0 = params
    if tau0 == 0:
        warnings.warn("tau0 = 0 gives a lossless effective medium; the realization estimates assume tau0 > 0",
                      stacklevel=2)
    tensor, rho = effective_material(case, eps, lam0, mu0, eta0, tau0, allow_lossless=True)
    mesh = mesh if mesh is not None else build_scene_mesh(geom, h, layer)
    dtn = dtn if dtn is not None else build_dtn(scene.exterior, geom.r, order)
    problem = ScatteringProblem(mesh=mesh, materials=scene.with_obstacle(tensor, rho), condition=Condition.NONE,
                                incident=incident, source=source, dtn=dtn, degree=degree, space=space,
                                eps=eps, case=case)
    return solve_problem(problem, keep_system=keep_system)


# ---------------------------------------------------------------------------
# boundary tractions
# ---------------------------------------------------------------------------
@dataclass
class BoundaryField:
    """Nodal values on a tagged curve, sorted by polar angle."""

    tag: Boundary
    nodes: np.ndarray
    points: np.ndarray
    angles: np.ndarray
    values: np.ndarray


_INNER = {
    Boundary.OBSTACLE: (Region.D,),
    Boundary.MEDIUM: (Region.D, Region.ANNULUS),
    Boundary.TRUNCATION: (Region.D, Region.ANNULUS, Region.SHELL),
}


def _side_regions(tag, side):
    inner = _INNER[Boundary(tag)]
    if side == "inner":
        return inner
    if side == "outer":
        return tuple(r for r in Region if r not in inner)
    raise ValueError("side must be 'inner' or 'outer'")


def _edge_adjacent_cells(mesh: Mesh, edges):
    """For each directed edge: the cell on its left and on its right (-1 if none)."""
    uniq, tri_edges = mesh.all_edges()
    lookup = {tuple(e): i for i, e in enumerate(uniq.tolist())}
    owners = [[] for _ in range(len(uniq))]
    for t, es in enumerate(tri_edges.tolist()):
        for e in es:
            owners[e].append(t)
    left = -np.ones(len(edges), dtype=np.int64)
    right = -np.ones(len(edges), dtype=np.int64)
    P = mesh.points
    for i, (a, b) in enumerate(edges.tolist()):
        for t in owners[lookup[(min(a, b), max(a, b))]]:
            third = [v for v in mesh.triangles[t] if v != a and v != b][0]
            d1 = P[b] - P[a]
            d2 = P[third] - P[a]
            if d1[0] * d2[1] - d1[1] * d2[0] > 0:
                left[i] = t
            else:
                right[i] = t
    return left, right


def _sorted_boundary(space, tag, values):
    nodes = space.boundary_nodes(tag)
    p = space.points[nodes]
    th = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)
    o = np.argsort(th)
    return BoundaryField(tag=Boundary(tag), nodes=nodes[o], points=p[o], angles=th[o], values=values[o])


def traction_on_boundary(sol: Solution, tag, side: str = "outer", method: str = "gradient") -> BoundaryField:
    """Traction ``nu.(C:grad u)`` on a tagged curve, ``nu`` pointing away from the origin.

    ``method="gradient"`` evaluates the adjacent element's gradient (with that
    side's material) at the edge nodes and averages vertex values weighted by
    edge length. ``method="weak"`` recovers the traction from the residual of
    the side's element equations (variationally consistent, superconvergent).
    """
    if method == "gradient":
        return _traction_gradient(sol, tag, side)
    if method == "weak":
        return _traction_weak(sol, tag, side)
    raise ValueError("method must be 'gradient' or 'weak'")


def _traction_gradient(sol, tag, side):
    space = sol.space
    mesh = space.mesh
    problem = sol.problem
    edges = mesh.tagged_edges(tag)
    left, right = _edge_adjacent_cells(mesh, edges)
    cells = left if side == "inner" else right
    if side not in ("inner", "outer"):
        raise ValueError("side must be 'inner' or 'outer'")
    active = problem.active_cells
    if np.any(cells < 0) or not np.all(active[cells]):
        raise ValueError(f"no solved elements on the {side} side of {Boundary(tag).name}")
    d = mesh.points[edges[:, 1]] - mesh.points[edges[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    nu = np.stack([d[:, 1], -d[:, 0]], axis=-1) / L[:, None]
    ref = local_nodes(2)
    Gref = shape_gradients(space.degree, ref)  # (6 positions, nloc, 2)
    _, _, inv = space.jacobians
    tri = mesh.triangles[cells]
    la = np.argmax(tri == edges[:, [0]], axis=1)
    lb = np.argmax(tri == edges[:, [1]], axis=1)
    pair_mid = {(0, 1): 3, (1, 0): 3, (1, 2): 4, (2, 1): 4, (2, 0): 5, (0, 2): 5}
    lm = np.array([pair_mid[(x, y)] for x, y in zip(la.tolist(), lb.tolist())])
    loc = sol.field.values[space.cells[cells]]  # (ne, nloc, 2)
    tables = np.stack([
        np.array([problem.materials.get(Region(r))[0].table for r in mesh.regions[cells]])
    ])[0]
    out_nodes = space.edge_nodes(tag)
    ne = len(edges)
    vals = np.zeros((ne, out_nodes.shape[1], 2), dtype=complex)
    for j, lpos in enumerate((la, lb, lm)[: out_nodes.shape[1]]):
        G = np.einsum("eak,ekl->eal", Gref[lpos], inv[cells])
        grad = np.einsum("eal,eai->eil", G, loc)
        sig = np.einsum("eijkl,ekl->eij", tables, grad)
        vals[:, j] = np.einsum("ei,eij->ej", nu, sig)
    nn = space.n_nodes
    acc = np.zeros((nn, 2), dtype=complex)
    wts = np.zeros(nn)
    for j in range(2):
        np.add.at(acc, out_nodes[:, j], L[:, None] * vals[:, j])
        np.add.at(wts, out_nodes[:, j], L)
    if out_nodes.shape[1] == 3:
        acc[out_nodes[:, 2]] = vals[:, 2]
        wts[out_nodes[:, 2]] = 1.0
    nodes = space.boundary_nodes(tag)
    res = np.zeros((nn, 2), dtype=complex)
    res[nodes] = acc[nodes] / wts[nodes, None]
    return _sorted_boundary(space, tag, res[nodes])


def boundary_mass_matrix(space: FunctionSpace, tag) -> sp.csr_matrix:
    en = space.edge_nodes(tag)
    t, w = gauss_legendre(4)
    N = edge_shape_functions(space.degree, t)
    Mref = np.einsum("q,qa,qb->ab", w, N, N)
    d = space.points[en[:, 1]] - space.points[en[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    vals = L[:, None, None] * Mref[None]
    r = np.broadcast_to(en[:, :, None], vals.shape).ravel()
    c = np.broadcast_to(en[:, None, :], vals.shape).ravel()
    return sp.coo_matrix((vals.ravel(), (r, c)), shape=(space.n_nodes, space.n_nodes)).tocsr()


def _traction_weak(sol, tag, side):
    space = sol.space
    mesh = space.mesh
    problem = sol.problem
    regs = _side_regions(tag, side)
    active = problem.active_cells
    omega = problem.materials.exterior.omega
    nodes = space.boundary_nodes(tag)
    on_curve = np.zeros(space.n_nodes, dtype=bool)
    on_curve[nodes] = True
    # only cells touching the curve contribute to the curve rows
    touch = np.any(on_curve[space.cells], axis=1)
    R = np.zeros(space.n_dofs, dtype=complex)
    found = False
    for reg in regs:
        cells = np.nonzero(active & touch & (mesh.regions == int(reg)))[0]
        if cells.size == 0:
            continue
        found = True
        tensor, rho = problem.materials.get(reg)
        Ae = element_matrices(space, cells, tensor.table, rho, omega)
        gd = _cell_dofs(space, cells)
        ue = sol.field.values.ravel()[gd]
        re = np.einsum("eab,eb->ea", Ae, ue)
        if problem.source is not None and reg in problem.source_regions:
            re = re + _source_load(space, cells, problem.source)
        np.add.at(R, gd.ravel(), re.ravel())
    if not found:
        raise ValueError(f"no solved elements on the {side} side of {Boundary(tag).name}")
    sign = 1.0 if side == "inner" else -1.0
    M = boundary_mass_matrix(space, tag)[nodes][:, nodes].tocsc().astype(complex)
    rhs = sign * R.reshape(-1, 2)[nodes]
    lu = spla.splu(M)
    t = np.stack([lu.solve(rhs[:, 0].copy()), lu.solve(rhs[:, 1].copy())], axis=-1)
    return _sorted_boundary(space, tag, t)


def traction_norm(bf: BoundaryField, s: float = -0.5, order: Optional[int] = None) -> float:
    """Modal ``H^s`` norm of a boundary field on a circle (trapezoid Fourier coefficients)."""
    from .norms import sobolev_from_coefficients

    radius = float(np.hypot(*bf.points.T).mean())
    n = order if order is not None else len(bf.angles) // 2 - 1
    c = fourier_coefficients(bf.angles, bf.values, n)
    return sobolev_from_coefficients(c, s, radius)


# ---------------------------------------------------------------------------
# energy bookkeeping
# ---------------------------------------------------------------------------
def energy_balance(sol: Solution):
    """Both sides of the discrete energy identity.

    Returns ``(flux, volume)`` with
    ``flux = Im int_{dB_r} (T u_in + Lambda (u - u_in)).u* ds`` and
    ``volume = -omega^2 sum_regions Im(rho) int |u|^2 + Im int f.u*``;
    they agree up to the solver residual.
    """
    from .norms import h1_densities

    problem = sol.problem
    if problem.dtn is None:
        raise ValueError("energy identity needs the DtN truncation")
    op = problem.dtn
    c = sol.modal
    g = sol.system.incident_data if sol.system is not None else incident_boundary_data(problem.incident, op)
    lam_c = np.einsum("kab,kb->ka", op.blocks, c)
    flux = float(np.imag(2 * np.pi * op.radius * np.sum(np.conj(c) * (g + lam_c))))
    omega = problem.materials.exterior.omega
    parts = []
    for reg in Region:
        if not problem.materials.has(reg):
            continue
        if not np.any(problem.active_cells & (problem.mesh.regions == int(reg))):
            continue
        rho = problem.materials.get(reg)[1]
        if rho.imag == 0:
            continue
        l2sq, _ = h1_densities(sol.field, regions=[reg])
        parts.append(-omega**2 * rho.imag * math.fsum(l2sq.tolist()))
    if problem.source is not None:
        parts.append(_source_pairing(sol).imag)
    return flux, math.fsum(parts)


def _source_pairing(sol) -> complex:
    """``int f.u*`` over the source regions with the assembly rule."""
    space = sol.space
    mask = sol.problem.mesh.region_mask(sol.problem.source_regions) & sol.problem.active_cells
    cells = np.nonzero(mask)[0]
    pts, w = triangle_rule(ASSEMBLY_RULE)
    x = space.map_points(pts, cells)
    f = np.asarray(sol.problem.source(x.reshape(-1, 2)), dtype=complex).reshape(len(cells), len(w), 2)
    u = space.evaluate(sol.field.values, pts, cells)
    det = np.abs(space.jacobians[1][cells])
    per = np.einsum("q,e,eqi->e", w, det, f * np.conj(u))
    return complex(math.fsum(per.real.tolist()), math.fsum(per.imag.tolist()))


def scattered_flux(sol: Solution) -> float:
    """``Im int_{dB_r} T u_s . u_s* ds`` from the modal trace (non-negative for radiating fields)."""
    op = sol.problem.dtn
    cs = sol.modal - incident_modal_trace(sol.problem.incident, op)
    return float(np.imag(2 * np.pi * op.radius * np.sum(np.conj(cs) * np.einsum("kab,kb->ka", op.blocks, cs))))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def write_solution(sol: Solution, path) -> None:
    """Text dump: header then one line per space node ``Re ux Im ux Re uy Im uy``."""
    p = sol.problem
    eps = "none" if p.eps is None else f"{p.eps:.17g}"
    case = "none" if p.case is None else str(p.case)
    with open(path, "w") as fh:
        fh.write("# elastoscat solution v1\n")
        fh.write(f"nodes {sol.space.n_nodes} dofs {sol.space.n_dofs} degree {sol.space.degree}\n")
        fh.write(f"omega {p.materials.exterior.omega:.17g} eps {eps} case {case} condition {p.condition.name}\n")
        for ux, uy in sol.field.values:
            fh.write(f"{ux.real:.17g} {ux.imag:.17g} {uy.real:.17g} {uy.imag:.17g}\n")


def read_solution_values(path) -> np.ndarray:
    with open(path) as fh:
        head = [fh.readline() for _ in range(3)]
        if not head[0].startswith("# elastoscat solution"):
            raise ValueError("not a solution file")
        n = int(head[1].split()[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (n, 4):
        raise ValueError("solution file body does not match its header")
    return (data[:, 0] + 1j * data[:, 1])[:, None] * np.array([1, 0]) + (data[:, 2] + 1j * data[:, 3])[:, None] * np.array([0, 1])


def write_region_norms(sol: Solution, path) -> None:
    """CSV with per-region ``L^2`` and ``H^1`` norms of the total field."""
    from .norms import h1_densities

    with open(path, "w") as fh:
        fh.write("region,l2,h1\n")
        for reg in Region:
            mask = sol.problem.active_cells & (sol.mesh.regions == int(reg))
            if not np.any(mask):
                continue
            a, b = h1_densities(sol.field, regions=[reg])
            l2 = math.sqrt(math.fsum(a.tolist()))
            h1 = math.sqrt(math.fsum(a.tolist()) + math.fsum(b.tolist()))
            fh.write(f"{reg.name},{l2:.17g},{h1:.17g}\n")
