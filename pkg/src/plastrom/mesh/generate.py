"""Structured quarter-plate-with-hole generator.

A single-patch transfinite 2D grid between the hole arc and the outer
rectangle boundary is triangulated, extruded in z, and each prism is split
into three tetrahedra with the min-vertex diagonal rule (conforming across
neighbours).  Boundary groups: ``bottom`` (y=0), ``left`` (x=0), ``back``
(z=0) as node groups, and ``top`` (y=ly) as both a node group and the only
surface-element group (traction side).
"""

from __future__ import annotations

import numpy as np

from ..errors import MeshError
from .core import TET10_EDGES, TRI6_EDGES, Mesh

GROUP_BOTTOM = "bottom"
GROUP_LEFT = "left"
GROUP_BACK = "back"
GROUP_TOP = "top"


def _split_prism(b0, b1, b2, t0, t1, t2):
    """Three conforming tets for a prism; bottom ids are the smaller ones."""
    bottom = (b0, b1, b2)
    top = (t0, t1, t2)
    i0 = int(np.argmin(bottom))
    v = [bottom[(i0 + k) % 3] for k in range(3)]
    w = [top[(i0 + k) % 3] for k in range(3)]
    if v[1] < v[2]:
        return [(v[0], v[1], v[2], w[2]), (v[0], v[1], w[2], w[1]),
                (v[0], w[1], w[2], w[0])]
    return [(v[0], v[1], v[2], w[1]), (v[0], w[1], v[2], w[2]),
            (v[0], w[1], w[2], w[0])]


def _midside_upgrade(nodes, tets, tri_faces):
    """Insert edge midpoints: T4 -> T10 volume and T3 -> T6 surface."""
    nodes = list(map(tuple, nodes))
    edge_mid: dict[tuple[int, int], int] = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in edge_mid:
            pa, pb = nodes[a], nodes[b]
            nodes.append(tuple(0.5 * (np.asarray(pa) + np.asarray(pb))))
            edge_mid[key] = len(nodes) - 1
        return edge_mid[key]

    tets10 = [list(conn) + [mid(conn[a], conn[b]) for a, b in TET10_EDGES]
              for conn in tets]
    tri6 = [list(conn) + [mid(conn[a], conn[b]) for a, b in TRI6_EDGES]
            for conn in tri_faces]
    return np.array(nodes), np.array(tets10, dtype=np.int64), \
        np.array(tri6, dtype=np.int64) if tri6 else np.zeros((0, 6), np.int64)


def generate_plate_with_hole(lx=10.0, ly=10.0, lz=1.0, hole_radius=2.0,
                             resolution=2, order=1) -> Mesh:
    """Quarter plate [0,lx]x[0,ly]x[0,lz] minus the hole x^2+y^2 < r^2."""
    r = float(hole_radius)
    if not 0.0 < r < min(lx, ly):
        raise MeshError(
            f"hole radius must satisfy 0 < r < min(lx, ly), got r={r}")
    if lz <= 0:
        raise MeshError("plate thickness must be positive")
    resolution = int(resolution)
    if resolution < 1:
        raise MeshError("resolution must be >= 1")
    if order not in (1, 2):
        raise MeshError("element order must be 1 or 2")

    n_t = 8 * resolution       # intervals along the hole arc
    n_r = 6 * resolution       # radial layers hole -> outer boundary
    n_z = resolution           # extrusion layers

    # transfinite 2D grid between hole arc and outer boundary
    theta = 0.5 * np.pi * np.arange(n_t + 1) / n_t
    hole = r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    path = (lx + ly) * np.arange(n_t + 1) / n_t
    outer = np.where(path[:, None] <= ly,
                     np.stack([np.full(n_t + 1, lx), path], axis=1),
                     np.stack([lx - (path - ly), np.full(n_t + 1, ly)], axis=1))
    frac = (np.arange(n_r + 1) / n_r)[None, :, None]
    grid2d = (1.0 - frac) * hole[:, None, :] + frac * outer[:, None, :]
    nodes2d = grid2d.reshape(-1, 2)            # index (i, j) -> i*(n_r+1)+j
    n2d = nodes2d.shape[0]

    tris = []
    for i in range(n_t):
        for j in range(n_r):
            n00 = i * (n_r + 1) + j
            n10 = (i + 1) * (n_r + 1) + j
            n11 = n10 + 1
            n01 = n00 + 1
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
    tris = np.array(tris, dtype=np.int64)
    # enforce counter-clockwise orientation so extruded tets come out positive
    p = nodes2d[tris]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = area2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    z_levels = lz * np.arange(n_z + 1) / n_z
    nodes = np.concatenate([
        np.column_stack([nodes2d, np.full(n2d, z)]) for z in z_levels])

    tets = []
    for k in range(n_z):
        base = k * n2d
        for a, b, c in tris:
            tets.extend(_split_prism(base + a, base + b, base + c,
                                     base + a + n2d, base + b + n2d,
                                     base + c + n2d))
    tets = np.array(tets, dtype=np.int64)

    # boundary faces lying in the traction plane y = ly
    tol = 1e-9 * max(lx, ly, lz)
    counts: dict[tuple, list] = {}
    for conn in tets:
        for f in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            key = tuple(sorted(conn[list(f)]))
            counts.setdefault(key, []).append(0)
    top_faces = [list(key) for key, owners in counts.items()
                 if len(owners) == 1
                 and np.all(np.abs(nodes[list(key), 1] - ly) <= tol)]
    top_faces.sort()

    if order == 2:
        nodes, volume, surface = _midside_upgrade(nodes, tets, top_faces)
        volume_kind, surface_kind = "tet10", "tri6"
    else:
        volume = tets
        surface = (np.array(top_faces, dtype=np.int64) if top_faces
                   else np.zeros((0, 3), np.int64))
        volume_kind, surface_kind = "tet4", "tri3"

    groups = {
        GROUP_BOTTOM: np.flatnonzero(np.abs(nodes[:, 1]) <= tol),
        GROUP_LEFT: np.flatnonzero(np.abs(nodes[:, 0]) <= tol),
        GROUP_BACK: np.flatnonzero(np.abs(nodes[:, 2]) <= tol),
        GROUP_TOP: np.flatnonzero(np.abs(nodes[:, 1] - ly) <= tol),
    }
    mesh = Mesh(nodes=nodes, volume_elements=volume, volume_kind=volume_kind,
                surface_elements=surface, surface_kind=surface_kind,
                surface_tags=[GROUP_TOP] * len(surface), node_groups=groups)
    mesh.validate()
    return mesh
