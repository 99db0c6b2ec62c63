"""Reading and writing Gmsh MSH 2.2 ASCII meshes.

Physical tags: triangles carry the region (1 = D, 2 = annulus, 3 = shell),
line elements the boundary (11 = obstacle, 12 = medium, 13 = truncation).
Element types 1/8 (2/3-node lines) and 2/9 (3/6-node triangles) are read;
higher-order nodes are dropped since quadratic nodes are regenerated from
the vertices.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .mesh import Mesh, SceneGeometry
from .tags import Boundary, Region

_LINE_TYPES = {1: 2, 8: 3}
_TRI_TYPES = {2: 3, 9: 6}
_NODES_PER_TYPE = {1: 2, 2: 3, 3: 4, 4: 4, 8: 3, 9: 6, 15: 1}


def write_msh(mesh: Mesh, path) -> None:
    """Write vertices, tagged lines and triangles with 17 significant digits."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames"]
    names = [(1, int(b), b.name) for b in Boundary] + [(2, int(r), r.name) for r in Region]
    lines.append(str(len(names)))
    lines += [f'{dim} {tag} "{name}"' for dim, tag, name in names]
    lines += ["$EndPhysicalNames", "$Nodes", str(mesh.n_nodes)]
    lines += [f"{i + 1} {x:.17g} {y:.17g} 0" for i, (x, y) in enumerate(mesh.points)]
    lines += ["$EndNodes", "$Elements", str(len(mesh.edges) + mesh.n_triangles)]
    eid = 1
    for (a, b), tag in zip(mesh.edges, mesh.edge_tags):
        lines.append(f"{eid} 1 2 {tag} {tag} {a + 1} {b + 1}")
        eid += 1
    for (a, b, c), reg in zip(mesh.triangles, mesh.regions):
        lines.append(f"{eid} 2 2 {reg} {reg} {a + 1} {b + 1} {c + 1}")
        eid += 1
    lines.append("$EndElements")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _sections(text):
    out = {}
    it = iter(text.splitlines())
    for line in it:
        line = line.strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            body = []
            for inner in it:
                if inner.strip() == f"$End{name}":
                    break
                body.append(inner)
            else:
                raise ValueError(f"unterminated section ${name}")
            out[name] = body
    return out


def read_msh(path, h: Optional[float] = None, geometry: Optional[SceneGeometry] = None) -> Mesh:
    """Read an MSH 2.2 ASCII file into a validated :class:`Mesh`.

    ``h`` defaults to the longest triangle edge.
    """
    with open(path) as fh:
        sec = _sections(fh.read())
    fmt = sec.get("MeshFormat")
    if not fmt or not fmt[0].split()[0].startswith("2."):
        raise ValueError("only MSH 2.x ASCII files are supported")
    if fmt[0].split()[1] != "0":
        raise ValueError("binary MSH files are not supported")
    nodes = sec["Nodes"]
    n = int(nodes[0])
    ids = np.empty(n, dtype=np.int64)
    xy = np.empty((n, 2))
    for i, line in enumerate(nodes[1:n + 1]):
        f = line.split()
        ids[i] = int(f[0])
        xy[i] = float(f[1]), float(f[2])
    index = {int(k): i for i, k in enumerate(ids)}
    tris, regs, edges, etags = [], [], [], []
    elems = sec["Elements"]
    for line in elems[1:int(elems[0]) + 1]:
        f = [int(v) for v in line.split()]
        etype, ntags = f[1], f[2]
        phys = f[3] if ntags > 0 else 0
        conn = [index[v] for v in f[3 + ntags:]]
        if etype in _TRI_TYPES:
            if phys not in {int(r) for r in Region}:
                raise ValueError(f"triangle with unknown physical tag {phys}")
            tris.append(conn[:3])
            regs.append(phys)
        elif etype in _LINE_TYPES:
            if phys not in {int(b) for b in Boundary}:
                continue
            edges.append(conn[:2])
            etags.append(phys)
        elif etype not in _NODES_PER_TYPE:
            raise ValueError(f"unsupported element type {etype}")
    tris = np.array(tris, dtype=np.int64)
    # drop nodes not used by any triangle (e.g. quadratic midpoints)
    used = np.unique(tris)
    remap = -np.ones(n, dtype=np.int64)
    remap[used] = np.arange(used.size)
    tris = remap[tris]
    edges = remap[np.array(edges, dtype=np.int64).reshape(-1, 2)]
    if np.any(edges < 0):
        raise ValueError("boundary line references a node outside the triangulation")
    pts = xy[used]
    # orient triangles counter-clockwise and boundary edges counter-clockwise about the origin
    p = pts[tris]
    cr = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tris[cr < 0] = tris[cr < 0][:, [0, 2, 1]]
    if len(edges):
        a, b = pts[edges[:, 0]], pts[edges[:, 1]]
        cw = (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) < 0
        edges[cw] = edges[cw][:, ::-1]
    if h is None:
        d = pts[tris] - pts[np.roll(tris, 1, axis=1)]
        h = float(np.hypot(d[..., 0], d[..., 1]).max())
    mesh = Mesh(points=pts, triangles=tris, regions=np.array(regs), edges=edges,
                edge_tags=np.array(etags, dtype=np.int64), h=h, geometry=geometry)
    mesh.validate()
    return mesh
