"""Scene geometry and a ring-based triangulator for nested star-shaped regions.

The truncated domain B_r is covered by concentric rings of nodes, uniform in
angle, with rings placed exactly on the three curves. Neighbouring rings are
stitched by merging their angle sequences, so every triangle lies between
two consecutive rings and the mesh is conforming by construction. A star-
shaped polygonal obstacle is handled by radially warping the disk model.
Optionally, geometrically graded rings resolve a boundary layer just inside
the obstacle boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .tags import Boundary, Region

MIN_AREA = 1e-14


@dataclass(frozen=True)
class BoundaryLayer:
    """Graded rings inside the obstacle, next to its boundary.

    The first ring sits ``first`` below the boundary; spacings grow by
    ``growth`` until they reach the bulk size ``h``.
    """

    first: float
    growth: float = 1.1

    def __post_init__(self):
        if not self.first > 0:
            raise ValueError("boundary-layer thickness must be positive")
        if not self.growth >= 1.0:
            raise ValueError("boundary-layer growth must be >= 1")


@dataclass(frozen=True)
class SceneGeometry:
    """Obstacle ``D`` (disk of radius ``a`` or star-shaped polygon), medium disk
    of radius ``R_omega``, source radius ``r0`` and truncation radius ``r``,
    all centered at the origin.
    """

    a: float = 0.5
    R_omega: float = 1.0
    r: float = 2.0
    r0: float = 1.5
    polygon: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.polygon is not None:
            poly = tuple(tuple(map(float, p)) for p in self.polygon)
            object.__setattr__(self, "polygon", poly)
        self.validate()

    @property
    def is_circular(self) -> bool:
        return self.polygon is None

    def validate(self) -> None:
        if not self.a > 0:
            raise ValueError("obstacle size must be positive")
        lo, hi = self.obstacle_extent()
        if not hi < self.R_omega:
            raise ValueError("obstacle must lie strictly inside the medium disk (D compactly inside Omega)")
        if not self.R_omega < self.r0:
            raise ValueError("medium disk must lie strictly inside the source ball (R_omega < r0)")
        if not self.r0 <= self.r:
            raise ValueError("source ball must lie inside the truncation ball (r0 <= r)")
        if self.polygon is not None:
            _check_star_polygon(np.asarray(self.polygon))

    def obstacle_extent(self) -> Tuple[float, float]:
        if self.polygon is None:
            return self.a, self.a
        p = np.asarray(self.polygon)
        th = np.linspace(0, 2 * np.pi, 2048, endpoint=False)
        b = self.obstacle_radius(th)
        rv = np.hypot(p[:, 0], p[:, 1])
        return float(min(b.min(), rv.min())), float(max(b.max(), rv.max()))

    def obstacle_radius(self, theta) -> np.ndarray:
        """Radius of ``dD`` along the ray at angle ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if self.polygon is None:
            return np.full(theta.shape, self.a)
        return _polygon_ray_radius(np.asarray(self.polygon), theta)

    def min_gap(self) -> float:
        lo, hi = self.obstacle_extent()
        return min(lo, self.R_omega - hi, self.r - self.R_omega)


def _polygon_angles(p):
    th = np.arctan2(p[:, 1], p[:, 0])
    return th


def _check_star_polygon(p):
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 3:
        raise ValueError("polygon needs at least three (x, y) vertices")
    th = np.unwrap(_polygon_angles(p))
    d = np.diff(np.append(th, th[0] + 2 * np.pi))
    if np.any(d <= 0) or abs(th[-1] - th[0]) >= 2 * np.pi:
        raise ValueError("polygon must be star-shaped about the origin with vertices in counter-clockwise order")
    # no vertex may sit on the origin and consecutive edges must see the origin on the left
    q = np.roll(p, -1, axis=0)
    cross = p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]
    if np.any(cross <= 0):
        raise ValueError("polygon is not star-shaped about the origin")


def _polygon_ray_radius(p, theta):
    th = np.mod(_polygon_angles(p), 2 * np.pi)
    order = np.argsort(th)
    p, th = p[order], th[order]
    t = np.mod(theta, 2 * np.pi)
    idx = np.searchsorted(th, t, side="right") - 1  # edge from vertex idx to idx+1
    idx = np.mod(idx, len(th))
    a = p[idx]
    b = p[(idx + 1) % len(th)]
    d = np.stack([np.cos(t), np.sin(t)], axis=-1)
    # solve s d = a + u (b - a) for s
    e = b - a
    den = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    num = a[..., 0] * e[..., 1] - a[..., 1] * e[..., 0]
    return num / den


# ---------------------------------------------------------------------------
# Mesh container
# ---------------------------------------------------------------------------
@dataclass
class Mesh:
    """Conforming P1 triangulation with region labels and tagged edges.

    ``edges`` lists tagged edges (the obstacle boundary, the medium boundary
    and the truncation circle); each is oriented counter-clockwise about
    the origin.
    """

    points: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    edges: np.ndarray
    edge_tags: np.ndarray
    h: float
    geometry: Optional[SceneGeometry] = None
    circle_radii: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.regions = np.ascontiguousarray(self.regions, dtype=np.int64)
        self.edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edge_tags = np.ascontiguousarray(self.edge_tags, dtype=np.int64)
        for arr in (self.points, self.triangles, self.regions, self.edges, self.edge_tags):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_mask(self, regions) -> np.ndarray:
        regions = [int(Region(r)) for r in np.atleast_1d(regions)]
        return np.isin(self.regions, regions)

    def tagged_edges(self, tag) -> np.ndarray:
        return self.edges[self.edge_tags == int(Boundary(tag))]

    def boundary_nodes(self, tag) -> np.ndarray:
        """Vertex indices of a tagged closed curve, ordered counter-clockwise."""
        e = self.tagged_edges(tag)
        if e.size == 0:
            raise KeyError(f"no edges tagged {Boundary(tag).name}")
        nxt = dict(zip(e[:, 0].tolist(), e[:, 1].tolist()))
        start = int(e[0, 0])
        out = [start]
        cur = nxt[start]
        while cur != start:
            out.append(cur)
            cur = nxt[cur]
            if len(out) > len(e):
                raise ValueError("tagged boundary is not a single closed curve")
        return np.array(out, dtype=np.int64)

    def is_circle(self, tag, rtol: float = 1e-10) -> bool:
        tag = int(Boundary(tag))
        if tag in self.circle_radii:
            return True
        nodes = self.boundary_nodes(tag)
        rad = np.hypot(*self.points[nodes].T)
        return bool(np.ptp(rad) <= rtol * rad.mean())

    def circle_radius(self, tag) -> float:
        tag = int(Boundary(tag))
        if tag in self.circle_radii:
            return self.circle_radii[tag]
        if not self.is_circle(tag):
            raise ValueError(f"boundary {Boundary(tag).name} is not a circle")
        nodes = self.boundary_nodes(tag)
        return float(np.hypot(*self.points[nodes].T).mean())

    def edge_lengths(self, tag) -> np.ndarray:
        e = self.tagged_edges(tag)
        d = self.points[e[:, 1]] - self.points[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def all_edges(self):
        """Unique undirected edges and, per triangle, its three edge ids (opposite order v0v1, v1v2, v2v0)."""
        t = self.triangles
        raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(raw, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        tri_edges = inv.reshape(3, -1).T
        return uniq, tri_edges

    def validate(self) -> None:
        """Raise ``ValueError`` on any broken invariant."""
        areas = self.signed_areas()
        if np.any(areas < MIN_AREA):
            raise ValueError(f"{int(np.sum(areas < MIN_AREA))} triangles with area below {MIN_AREA}")
        uniq, tri_edges = self.all_edges()
        count = np.bincount(tri_edges.ravel(), minlength=len(uniq))
        if np.any(count > 2):
            raise ValueError("non-manifold edge shared by more than two triangles")
        boundary = {tuple(e) for e in uniq[count == 1].tolist()}
        tagged = {tuple(sorted(e)) for e in self.edges.tolist()}
        all_e = {tuple(e) for e in uniq.tolist()}
        if not tagged <= all_e:
            raise ValueError("tagged edge not present in the triangulation")
        if not boundary <= tagged:
            raise ValueError("untagged boundary edge (mesh has a hole or is not conforming)")
        tag_of = {}
        for e, t in zip(self.edges.tolist(), self.edge_tags.tolist()):
            k = tuple(sorted(e))
            if k in tag_of and tag_of[k] != t:
                raise ValueError("edge carries two boundary tags")
            tag_of[k] = t
        for tag in np.unique(self.edge_tags):
            self.boundary_nodes(int(tag))
        if not set(np.unique(self.regions).tolist()) <= {int(r) for r in Region}:
            raise ValueError("unknown region label")


# ---------------------------------------------------------------------------
# Ring construction
# ---------------------------------------------------------------------------
@dataclass
class _Ring:
    radius: float  # model radius (disk model before warping)
    angles: np.ndarray  # sorted, in [0, 2pi)
    start: int = 0  # first global node id
    tag: Optional[int] = None


def _uniform_angles(n, offset):
    return np.mod(2 * np.pi * (np.arange(n) + offset) / n, 2 * np.pi)


def _ring_count(radius, h, minimum=6):
    return max(minimum, int(math.ceil(2 * np.pi * radius / h)))


def _obstacle_angles(geom: SceneGeometry, h: float) -> np.ndarray:
    """Angles of the obstacle-boundary ring, including polygon corners."""
    if geom.polygon is None:
        return _uniform_angles(_ring_count(geom.a, h), 0.0)
    p = np.asarray(geom.polygon)
    corners = np.sort(np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi))
    # subdivide each polygon edge by angle so that chord pieces are at most h
    out = []
    for i, t0 in enumerate(corners):
        t1 = corners[(i + 1) % len(corners)]
        if t1 <= t0:
            t1 += 2 * np.pi
        pa = geom.obstacle_radius(np.array([t0]))[0] * np.array([math.cos(t0), math.sin(t0)])
        pb = geom.obstacle_radius(np.array([t1]))[0] * np.array([math.cos(t1), math.sin(t1)])
        m = max(1, int(math.ceil(np.hypot(*(pb - pa)) / h)))
        # equal chord lengths: parameterize along the straight edge, then take angles
        s = np.arange(m) / m
        q = pa[None, :] + s[:, None] * (pb - pa)[None, :]
        out.append(np.arctan2(q[:, 1], q[:, 0]))
    return np.sort(np.mod(np.concatenate(out), 2 * np.pi))


def _layer_radii(a_model, h, layer: Optional[BoundaryLayer]):
    """Model radii of graded rings strictly inside ``a_model`` (descending)."""
    if layer is None:
        return []
    radii = []
    depth = 0.0
    step = layer.first
    while step < h and depth + step < 0.5 * a_model:
        depth += step
        radii.append(a_model - depth)
        step *= layer.growth
    return radii


def _zone_radii(lo, hi, h):
    m = max(1, int(round((hi - lo) / h)))
    return [lo + (hi - lo) * j / m for j in range(1, m)]


def _stitch(A: _Ring, B: _Ring) -> List[Tuple[int, int, int]]:
    """Triangles between two rings by merging their angle sequences."""
    na, nb = len(A.angles), len(B.angles)
    alpha = A.angles
    beta = B.angles
    diff = np.abs(np.angle(np.exp(1j * (beta - alpha[0]))))
    j0 = int(np.argmin(diff))
    b_unw = beta[(j0 + np.arange(nb + 1)) % nb].copy()
    b_unw = alpha[0] + np.angle(np.exp(1j * (b_unw - alpha[0])))
    b_unw = np.concatenate([[b_unw[0]], b_unw[0] + np.cumsum(np.mod(np.diff(b_unw), 2 * np.pi))])
    a_unw = np.concatenate([alpha, [alpha[0] + 2 * np.pi]])
    tris = []
    i = j = 0
    ida = lambda i: A.start + (i % na)
    idb = lambda j: B.start + ((j0 + j) % nb)
    while i < na or j < nb:
        adv_a = j >= nb or (i < na and a_unw[i + 1] <= b_unw[j + 1])
        if adv_a:
            tris.append((ida(i), ida(i + 1), idb(j)))
            i += 1
        else:
            tris.append((ida(i), idb(j + 1), idb(j)))
            j += 1
    return tris


def build_scene_mesh(geom: SceneGeometry, h: float, layer: Optional[BoundaryLayer] = None) -> Mesh:
    """Triangulate ``B_r`` with rings on ``dD``, ``dOmega`` and ``dB_r``.

    Parameters
    ----------
    geom : SceneGeometry
    h : float
        Target edge length; must be smaller than the narrowest gap.
    layer : BoundaryLayer, optional
        Graded rings inside ``D`` next to ``dD``.
    """
    if not h > 0:
        raise ValueError("mesh size must be positive")
    geom.validate()
    if not h < geom.min_gap():
        raise ValueError(f"h={h} too coarse to separate the curves (narrowest gap {geom.min_gap():.4g})")
    a, R, r = geom.a, geom.R_omega, geom.r

    rings: List[_Ring] = []
    off = [0.0]

    def add(radius, angles=None, tag=None):
        if angles is None:
            off[0] = 0.5 - off[0]
            angles = _uniform_angles(_ring_count(radius, h), off[0])
        rings.append(_Ring(radius=radius, angles=np.sort(angles), tag=tag))

    obst = _obstacle_angles(geom, h)
    lay = _layer_radii(a, h, layer)
    inner_top = lay[-1] if lay else a
    for rad in sorted(_zone_radii(0.0, inner_top, h)):
        add(rad)
    for rad in reversed(lay):
        add(rad, obst)
    add(a, obst, int(Boundary.OBSTACLE))
    for rad in _zone_radii(a, R, h):
        add(rad)
    add(R, _uniform_angles(_ring_count(R, h), 0.0), int(Boundary.MEDIUM))
    for rad in _zone_radii(R, r, h):
        add(rad)
    add(r, _uniform_angles(_ring_count(r, h), 0.0), int(Boundary.TRUNCATION))

    # node coordinates
    pts = [np.zeros((1, 2))]
    nid = 1
    for ring in rings:
        ring.start = nid
        nid += len(ring.angles)
        th = ring.angles
        rho = _warp(geom, ring.radius, th)
        pts.append(np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1))
    points = np.vstack(pts)

    tris = [(0, rings[0].start + j, rings[0].start + (j + 1) % len(rings[0].angles))
            for j in range(len(rings[0].angles))]
    for A, B in zip(rings[:-1], rings[1:]):
        tris.extend(_stitch(A, B))
    tris = np.array(tris, dtype=np.int64)
    # orient counter-clockwise
    p = points[tris]
    cr = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = cr < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    edges, etags, curves = [], [], {}
    for ring in rings:
        if ring.tag is None:
            continue
        n = len(ring.angles)
        ids = ring.start + np.arange(n)
        edges.append(np.stack([ids, np.roll(ids, -1)], axis=-1))
        etags.append(np.full(n, ring.tag))
        curves[ring.tag] = points[ids]
    edges = np.vstack(edges)
    etags = np.concatenate(etags)

    regions = _label_regions(points, tris, curves)
    circles = {int(Boundary.MEDIUM): float(R), int(Boundary.TRUNCATION): float(r)}
    if geom.is_circular:
        circles[int(Boundary.OBSTACLE)] = float(a)
    mesh = Mesh(points=points, triangles=tris, regions=regions, edges=edges, edge_tags=etags,
                h=float(h), geometry=geom, circle_radii=circles)
    mesh.validate()
    return mesh


def _warp(geom: SceneGeometry, rho_model: float, theta) -> np.ndarray:
    """Map model radii of the concentric-disk layout onto the actual obstacle."""
    if geom.polygon is None:
        return np.full(np.shape(theta), rho_model)
    b = geom.obstacle_radius(theta)
    a, R = geom.a, geom.R_omega
    if rho_model <= a:
        return rho_model * b / a
    if rho_model < R:
        return b + (rho_model - a) * (R - b) / (R - a)
    return np.full(np.shape(theta), rho_model)


def _polyline_radius(curve, theta):
    """Radius of a closed star-shaped polyline along rays at ``theta``."""
    th = np.mod(np.arctan2(curve[:, 1], curve[:, 0]), 2 * np.pi)
    order = np.argsort(th)
    return _polygon_ray_radius(curve[order], theta)


def _label_regions(points, tris, curves) -> np.ndarray:
    """Region of each triangle from its centroid against the tagged polylines."""
    c = points[tris].mean(axis=1)
    rc = np.hypot(c[:, 0], c[:, 1])
    tc = np.arctan2(c[:, 1], c[:, 0])
    rd = _polyline_radius(curves[int(Boundary.OBSTACLE)], tc)
    rm = _polyline_radius(curves[int(Boundary.MEDIUM)], tc)
    lab = np.full(len(tris), int(Region.SHELL), dtype=np.int64)
    lab[rc < rm] = int(Region.ANNULUS)
    lab[rc < rd] = int(Region.D)
    return lab


def node_regions(mesh: Mesh) -> Dict[int, np.ndarray]:
    """Per-region boolean masks over nodes (a node belongs to every region touching it)."""
    out = {}
    for reg in Region:
        m = np.zeros(mesh.n_nodes, dtype=bool)
        m[mesh.triangles[mesh.regions == int(reg)].ravel()] = True
        out[int(reg)] = m
    return out
