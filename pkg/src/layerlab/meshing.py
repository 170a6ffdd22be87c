"""
Conforming triangulations of the insulated body ``Omega_eps``.

The thin layer is a structured band of ``n_b x m`` quadrilaterals laid along
the boundary parameter and the normal fibres, each split into two triangles,
with nodes at the exact offsets ``gamma(t) + s eps h(t) nu(t)``. The body is
meshed by constrained Delaunay (Triangle) with the interface polygon as its
only boundary, so interface and outer boundary are unions of element edges.

Vertex numbering: the ``n_b`` interface nodes come first, then the other
interior vertices, then the layer vertices fibre level by fibre level. The
interior sub-mesh is therefore the vertex prefix ``[0, n_interior)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import triangle

from .exceptions import FocalError, MeshError

log = logging.getLogger(__name__)

INTERIOR = 0
LAYER = 1
INTERFACE = 0
OUTER = 1

MIN_ANGLE_DEG = 20.0


@dataclass(frozen=True)
class MeshParams:
    n_b: int = 128
    m: int = 4
    interior_scale: float = 1.0

    def __post_init__(self):
        if self.n_b < 16:
            raise MeshError(f"n_b must be >= 16, got {self.n_b}")
        if self.m < 2:
            raise MeshError(f"m must be >= 2, got {self.m}")
        if self.interior_scale <= 0:
            raise MeshError("interior_scale must be positive")


@dataclass(frozen=True, eq=False)
class LayerMesh:
    vertices: np.ndarray          # (N, 2)
    triangles: np.ndarray         # (M, 3), counter-clockwise
    region: np.ndarray            # (M,) INTERIOR | LAYER
    interface_edges: np.ndarray   # (n_b, 2)
    outer_edges: np.ndarray       # (n_b, 2) or (0, 2) for an interior-only mesh
    edge_t: np.ndarray            # (n_b, 2) boundary parameter at both ends of edge i
    n_interior: int               # vertices [0, n_interior) belong to the body
    layer_nodes: np.ndarray | None = None  # (n_b, m + 1) vertex ids, column 0 on the interface
    eps: float | None = None

    @property
    def n_b(self):
        return self.interface_edges.shape[0]

    @property
    def m(self):
        return None if self.layer_nodes is None else self.layer_nodes.shape[1] - 1

    @property
    def has_layer(self):
        return self.layer_nodes is not None

    @property
    def interface_t(self):
        return self.edge_t[:, 0]

    @property
    def outer_edge_t(self):
        """Boundary parameter at OUTER edge midpoints."""
        return self.edge_t.mean(axis=1)

    def interior(self):
        """Body-only mesh sharing the first ``n_interior`` vertices."""
        keep = self.region == INTERIOR
        return LayerMesh(
            vertices=self.vertices[: self.n_interior],
            triangles=self.triangles[keep],
            region=self.region[keep],
            interface_edges=self.interface_edges,
            outer_edges=np.zeros((0, 2), dtype=int),
            edge_t=self.edge_t,
            n_interior=self.n_interior,
        )

    def robin_edges(self):
        """Edges carrying the Robin term: OUTER with a layer, INTERFACE without."""
        return self.outer_edges if self.has_layer else self.interface_edges

    def edges(self):
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)


def triangle_areas(vertices, triangles):
    p = vertices[triangles]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def triangle_angles(vertices, triangles):
    p = vertices[triangles]
    out = np.empty((len(triangles), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cos = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out[:, k] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return out


def _mesh_interior(boundary, target_edge):
    n = len(boundary)
    seg = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    max_area = np.sqrt(3.0) / 4.0 * target_edge**2
    # p: PSLG, q: min angle, a: area bound, Y: no Steiner points on the boundary
    flags = f"pq{MIN_ANGLE_DEG:g}a{max_area:.12g}YQ"
    out = triangle.triangulate({"vertices": boundary, "segments": seg}, flags)
    verts = out["vertices"]
    if len(verts) < n or not np.allclose(verts[:n], boundary, rtol=0, atol=1e-14):
        raise MeshError("interior mesher moved or dropped interface vertices")
    return verts, out["triangles"].astype(int)


def build_mesh(geom, eps=None, params=None):
    """Mesh ``Omega`` plus the layer of thickness ``eps * h``."""
    params = params or MeshParams()
    eps = geom.eps if eps is None else eps
    n_b, m = params.n_b, params.m
    curve = geom.curve

    t = np.arange(n_b) / n_b
    fr = curve.frame(t)
    thick = eps * geom.h(t)
    if np.any(1.0 + thick * fr.curvature <= 0):
        raise FocalError("layer thickness reaches the focal distance")
    boundary = fr.point

    target = params.interior_scale * np.mean(np.linalg.norm(np.roll(boundary, -1, axis=0) - boundary, axis=1))
    verts, tris = _mesh_interior(boundary, target)
    n_int = len(verts)

    s = np.arange(1, m + 1) / m
    layer_pts = fr.point[None, :, :] + (s[:, None, None] * thick[None, :, None]) * fr.normal[None, :, :]
    nodes = np.empty((n_b, m + 1), dtype=int)
    nodes[:, 0] = np.arange(n_b)
    nodes[:, 1:] = n_int + (np.arange(m)[None, :] * n_b + np.arange(n_b)[:, None])
    vertices = np.vstack([verts, layer_pts.reshape(-1, 2)])

    ip = (np.arange(n_b) + 1) % n_b
    quads = []
    for j in range(m):
        a, b = nodes[:, j], nodes[ip, j]
        c, d = nodes[ip, j + 1], nodes[:, j + 1]
        quads.append(np.column_stack([a, b, c]))
        quads.append(np.column_stack([a, c, d]))
    # keep per-quad ordering: row i*2m + 2j + {0,1} <-> quad (i, j)
    layer_tris = np.stack(quads, axis=1).reshape(-1, 3)
    triangles = np.vstack([tris, layer_tris])
    region = np.concatenate([np.full(len(tris), INTERIOR, np.int8), np.full(len(layer_tris), LAYER, np.int8)])

    area = triangle_areas(vertices, triangles)
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    area = np.abs(area)
    if np.any(area <= 1e-14 * target**2):
        raise MeshError(f"{np.sum(area <= 0)} degenerate triangles")
    ang = triangle_angles(vertices, triangles[region == INTERIOR]).min()
    if ang < MIN_ANGLE_DEG - 1e-6:
        raise MeshError(f"interior minimum angle {ang:.2f} deg below the {MIN_ANGLE_DEG} deg floor")

    edge_t = np.column_stack([t, np.where(ip == 0, 1.0, t[ip])])
    mesh = LayerMesh(
        vertices=vertices,
        triangles=triangles,
        region=region,
        interface_edges=np.column_stack([nodes[:, 0], nodes[ip, 0]]),
        outer_edges=np.column_stack([nodes[:, m], nodes[ip, m]]),
        edge_t=edge_t,
        n_interior=n_int,
        layer_nodes=nodes,
        eps=eps,
    )
    log.debug("mesh: %d vertices, %d triangles (n_b=%d, m=%d)", len(vertices), len(triangles), n_b, m)
    return mesh


def _polyline_length(vertices, edges):
    if len(edges) == 0:
        return 0.0
    return float(np.sum(np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)))


def mesh_diagnostics(mesh):
    area = triangle_areas(mesh.vertices, mesh.triangles)
    ang = triangle_angles(mesh.vertices, mesh.triangles)
    p = mesh.vertices[mesh.triangles]
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    # aspect: longest edge over the altitude onto it
    aspect = lengths.max(axis=1) ** 2 / (2.0 * np.abs(area))
    interior = mesh.region == INTERIOR
    n_vertices = len(np.unique(mesh.triangles))
    return {
        "min_angle": float(ang.min()),
        "min_angle_interior": float(ang[interior].min()),
        "max_aspect": float(aspect.max()),
        "area_interior": float(area[interior].sum()),
        "area_layer": float(area[~interior].sum()),
        "length_interface": _polyline_length(mesh.vertices, mesh.interface_edges),
        "length_outer": _polyline_length(mesh.vertices, mesh.outer_edges),
        "vertices": n_vertices,
        "triangles": int(len(mesh.triangles)),
        "euler_characteristic": int(n_vertices - len(mesh.edges()) + len(mesh.triangles)),
    }


def write_mesh(mesh, path):
    """Plain-text export: three header lines, then vertex, triangle and edge records."""
    path = Path(path)
    edges = np.vstack([mesh.interface_edges, mesh.outer_edges])
    tags = np.concatenate([np.full(len(mesh.interface_edges), INTERFACE), np.full(len(mesh.outer_edges), OUTER)])
    with open(path, "w") as fh:
        fh.write(f"vertices {len(mesh.vertices)}\n")
        fh.write(f"triangles {len(mesh.triangles)}\n")
        fh.write(f"edges {len(edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for (a, b, c), r in zip(mesh.triangles, mesh.region):
            fh.write(f"{a} {b} {c} {r}\n")
        for (a, b), g in zip(edges, tags):
            fh.write(f"{a} {b} {g}\n")


def read_mesh(path):
    """Read the plain-text export back as raw arrays (vertices, triangles, region, edges, tags)."""
    with open(path) as fh:
        counts = [int(fh.readline().split()[1]) for _ in range(3)]
        rows = [fh.readline().split() for _ in range(sum(counts))]
    nv, nt, ne = counts
    vertices = np.array(rows[:nv], dtype=float)
    tri = np.array(rows[nv : nv + nt], dtype=int).reshape(-1, 4)
    edg = np.array(rows[nv + nt :], dtype=int).reshape(-1, 3)
    return vertices, tri[:, :3], tri[:, 3], edg[:, :2], edg[:, 2]
