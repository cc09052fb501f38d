"""Two-level meshes: volume tetrahedra plus tagged boundary triangles.

Reference elements use Gmsh node ordering.  Quadrature rules are degree-1 for
linear elements and degree-2 for quadratic ones, exact for affine element
geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MeshError

_A_T10 = 0.5854101966249685
_B_T10 = 0.1381966011250105

#: reference quadrature: kind -> (points (nq, dim), weights (nq,))
QUADRATURE = {
    "tet4": (np.array([[0.25, 0.25, 0.25]]), np.array([1.0 / 6.0])),
    "tet10": (
        np.array([
            [_B_T10, _B_T10, _B_T10],
            [_A_T10, _B_T10, _B_T10],
            [_B_T10, _A_T10, _B_T10],
            [_B_T10, _B_T10, _A_T10],
        ]),
        np.full(4, 1.0 / 24.0),
    ),
    "tri3": (np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])),
    "tri6": (
        np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0],
                  [1.0 / 6.0, 2.0 / 3.0]]),
        np.full(3, 1.0 / 6.0),
    ),
}

#: Gmsh edge-node pairs for quadratic elements
TET10_EDGES = [(0, 1), (1, 2), (0, 2), (0, 3), (2, 3), (1, 3)]
TRI6_EDGES = [(0, 1), (1, 2), (2, 0)]

N_CORNERS = {"tet4": 4, "tet10": 4, "tri3": 3, "tri6": 3}
N_NODES = {"tet4": 4, "tet10": 10, "tri3": 3, "tri6": 6}


def shape_functions(kind: str, points: np.ndarray):
    """Values and reference gradients of the shape functions.

    Returns ``(N, dN)`` with shapes ``(nq, nn)`` and ``(nq, nn, dim)``.
    """
    nq = points.shape[0]
    if kind in ("tet4", "tet10"):
        xi, eta, zeta = points[:, 0], points[:, 1], points[:, 2]
        L = np.stack([1.0 - xi - eta - zeta, xi, eta, zeta], axis=1)
        dL = np.array([[-1.0, -1.0, -1.0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
        if kind == "tet4":
            return L, np.broadcast_to(dL, (nq, 4, 3)).copy()
        N = np.empty((nq, 10))
        dN = np.empty((nq, 10, 3))
        for i in range(4):
            N[:, i] = L[:, i] * (2.0 * L[:, i] - 1.0)
            dN[:, i] = (4.0 * L[:, i] - 1.0)[:, None] * dL[i]
        for e, (a, b) in enumerate(TET10_EDGES):
            N[:, 4 + e] = 4.0 * L[:, a] * L[:, b]
            dN[:, 4 + e] = 4.0 * (L[:, a, None] * dL[b] + L[:, b, None] * dL[a])
        return N, dN
    if kind in ("tri3", "tri6"):
        xi, eta = points[:, 0], points[:, 1]
        L = np.stack([1.0 - xi - eta, xi, eta], axis=1)
        dL = np.array([[-1.0, -1.0], [1, 0], [0, 1.0]])
        if kind == "tri3":
            return L, np.broadcast_to(dL, (nq, 3, 2)).copy()
        N = np.empty((nq, 6))
        dN = np.empty((nq, 6, 2))
        for i in range(3):
            N[:, i] = L[:, i] * (2.0 * L[:, i] - 1.0)
            dN[:, i] = (4.0 * L[:, i] - 1.0)[:, None] * dL[i]
        for e, (a, b) in enumerate(TRI6_EDGES):
            N[:, 3 + e] = 4.0 * L[:, a] * L[:, b]
            dN[:, 3 + e] = 4.0 * (L[:, a, None] * dL[b] + L[:, b, None] * dL[a])
        return N, dN
    raise MeshError(f"unknown element kind {kind!r}")


@dataclass
class Mesh:
    """Two-level mesh: nodes, one kind of volume element, tagged surfaces."""

    nodes: np.ndarray                      # (n_no, 3), mm
    volume_elements: np.ndarray            # (n_ev, 4|10) int
    volume_kind: str
    surface_elements: np.ndarray           # (n_es, 3|6) int
    surface_kind: str
    surface_tags: list[str] = field(default_factory=list)
    node_groups: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_volume(self) -> int:
        return self.volume_elements.shape[0]

    @property
    def n_surface(self) -> int:
        return self.surface_elements.shape[0]

    @property
    def n_qp_per_volume(self) -> int:
        return QUADRATURE[self.volume_kind][1].shape[0]

    @property
    def n_qp(self) -> int:
        """Total number of volume quadrature points."""
        return self.n_volume * self.n_qp_per_volume

    @property
    def n_dof(self) -> int:
        return 3 * self.n_nodes

    def surface_group(self, tag: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.surface_tags) == np.str_(tag))

    def validate(self) -> None:
        if self.n_volume and self.volume_elements.max() >= self.n_nodes:
            raise MeshError("volume element references a missing node")
        if self.n_surface:
            if self.surface_elements.max() >= self.n_nodes:
                raise MeshError("surface element references a missing node")
            if len(self.surface_tags) != self.n_surface:
                raise MeshError("one tag required per surface element")
            counts: dict[tuple, int] = {}
            faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
            for conn in self.volume_elements:
                for f in faces:
                    key = tuple(sorted(conn[list(f)]))
                    counts[key] = counts.get(key, 0) + 1
            for conn in self.surface_elements:
                key = tuple(sorted(conn[:3]))
                if counts.get(key) != 1:
                    raise MeshError(
                        "surface element is not a boundary face of exactly "
                        f"one volume element: nodes {key}")
        for name, idx in self.node_groups.items():
            if idx.size and idx.max() >= self.n_nodes:
                raise MeshError(f"node group {name!r} references missing node")

    def volume_measures(self) -> np.ndarray:
        """Per volume-element measure |K_q| from the mapped quadrature."""
        return volume_geometry(self)[2].sum(axis=1)

    def surface_measures(self) -> np.ndarray:
        return surface_geometry(self)[1].sum(axis=1)

    def volume(self) -> float:
        return float(self.volume_measures().sum())


def volume_geometry(mesh: Mesh):
    """Physical shape gradients and mapped weights on all volume elements.

    Returns ``(N, grads, w)`` with shapes ``(nq, nn)``, ``(ne, nq, nn, 3)``
    and ``(ne, nq)``.
    """
    pts, wref = QUADRATURE[mesh.volume_kind]
    N, dN = shape_functions(mesh.volume_kind, pts)
    X = mesh.nodes[mesh.volume_elements]          # (ne, nn, 3)
    # J[e,q,i,j] = sum_a X[e,a,i] dN[q,a,j]
    J = np.einsum("eai,qaj->eqij", X, dN)
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0):
        bad = int(np.argwhere(detJ <= 0)[0][0])
        raise MeshError(f"non-positive Jacobian in volume element {bad}")
    Jinv = np.linalg.inv(J)
    grads = np.einsum("qaj,eqji->eqai", dN, Jinv)
    w = wref[None, :] * detJ
    return N, grads, w


def surface_geometry(mesh: Mesh):
    """Shape values and mapped weights on surface elements: ``(N, w)``."""
    if mesh.n_surface == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    pts, wref = QUADRATURE[mesh.surface_kind]
    N, dN = shape_functions(mesh.surface_kind, pts)
    X = mesh.nodes[mesh.surface_elements]         # (ns, nn, 3)
    T = np.einsum("eai,qaj->eqij", X, dN)          # tangents in columns
    cross = np.cross(T[..., 0], T[..., 1])
    area = np.linalg.norm(cross, axis=-1)
    if np.any(area <= 0):
        raise MeshError("degenerate surface element")
    return N, wref[None, :] * area


@dataclass
class RestrictionTables:
    """Element-local to global index maps for dofs and quadrature unknowns."""

    nodal: np.ndarray            # (ne, 3*nn) global dof per local dof
    quad_offsets: np.ndarray     # (ne+1,) into the volume quadrature points
    surface_nodal: np.ndarray    # (ns, 3*nns)

    def stress_slice(self, q: int) -> slice:
        """Contiguous slice of the global stress vector owned by element q."""
        return slice(6 * self.quad_offsets[q], 6 * self.quad_offsets[q + 1])


def _dof_table(elements: np.ndarray) -> np.ndarray:
    ne, nn = elements.shape
    tab = np.empty((ne, 3 * nn), dtype=np.int64)
    for c in range(3):
        tab[:, c::3] = 3 * elements + c
    return tab


def build_restriction_tables(mesh: Mesh) -> RestrictionTables:
    nqe = mesh.n_qp_per_volume
    offsets = np.arange(mesh.n_volume + 1, dtype=np.int64) * nqe
    surface = (_dof_table(mesh.surface_elements) if mesh.n_surface
               else np.zeros((0, 0), dtype=np.int64))
    return RestrictionTables(_dof_table(mesh.volume_elements), offsets, surface)


@dataclass
class ReducedMesh:
    """Elements with strictly positive empirical weights, per level."""

    parent: Mesh
    kept_volume: np.ndarray     # sorted int indices
    kept_surface: np.ndarray
    volume_weights: np.ndarray  # per kept element, > 0
    surface_weights: np.ndarray

    @property
    def n_kept_volume(self) -> int:
        return int(self.kept_volume.size)

    @property
    def n_kept_surface(self) -> int:
        return int(self.kept_surface.size)


def extract_reduced_mesh(mesh: Mesh, volume_weights, surface_weights=None):
    """Keep the elements with strictly positive weights (weights copied)."""
    volume_weights = np.asarray(volume_weights, dtype=float)
    if volume_weights.shape != (mesh.n_volume,):
        raise MeshError(
            f"volume weight vector has size {volume_weights.size}, "
            f"expected {mesh.n_volume}")
    if surface_weights is None:
        surface_weights = np.zeros(mesh.n_surface)
    surface_weights = np.asarray(surface_weights, dtype=float)
    if surface_weights.shape != (mesh.n_surface,):
        raise MeshError(
            f"surface weight vector has size {surface_weights.size}, "
            f"expected {mesh.n_surface}")
    if np.any(volume_weights < 0) or np.any(surface_weights < 0):
        raise MeshError("empirical weights must be non-negative")
    kv = np.flatnonzero(volume_weights > 0)
    ks = np.flatnonzero(surface_weights > 0)
    return ReducedMesh(mesh, kv, ks, volume_weights[kv].copy(),
                       surface_weights[ks].copy())
