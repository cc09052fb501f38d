"""Gmsh MSH 2.2 ASCII import/export (tets, boundary triangles, node groups).

Supported element types: 4/11 (linear/quadratic tetrahedra), 2/9 (linear/
quadratic triangles), 15 (points, used to persist node groups).  Physical
names carry group names; unnamed groups fall back to ``surface_<id>`` /
``group_<id>``.
"""

from __future__ import annotations

import numpy as np

from ..errors import MeshError
from .core import Mesh

_VOLUME_TYPES = {4: ("tet4", 4), 11: ("tet10", 10)}
_SURFACE_TYPES = {2: ("tri3", 3), 9: ("tri6", 6)}


def export_msh(mesh: Mesh) -> str:
    """Serialize a mesh to MSH 2.2 ASCII."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat"]

    surface_names = sorted(set(mesh.surface_tags))
    surf_ids = {name: 101 + i for i, name in enumerate(surface_names)}
    group_names = sorted(mesh.node_groups)
    group_ids = {name: 201 + i for i, name in enumerate(group_names)}
    names = [(3, 1, "volume")]
    names += [(2, surf_ids[n], n) for n in surface_names]
    names += [(0, group_ids[n], n) for n in group_names]
    lines.append("$PhysicalNames")
    lines.append(str(len(names)))
    lines += [f'{dim} {pid} "{name}"' for dim, pid, name in names]
    lines.append("$EndPhysicalNames")

    lines.append("$Nodes")
    lines.append(str(mesh.n_nodes))
    for i, (x, y, z) in enumerate(mesh.nodes, start=1):
        lines.append(f"{i} {x:.17g} {y:.17g} {z:.17g}")
    lines.append("$EndNodes")

    vol_type = 4 if mesh.volume_kind == "tet4" else 11
    surf_type = 2 if mesh.surface_kind == "tri3" else 9
    elems = []
    for conn in mesh.volume_elements:
        elems.append((vol_type, 1, conn))
    for conn, tag in zip(mesh.surface_elements, mesh.surface_tags):
        elems.append((surf_type, surf_ids[tag], conn))
    for name in group_names:
        for node in mesh.node_groups[name]:
            elems.append((15, group_ids[name], np.array([node])))
    lines.append("$Elements")
    lines.append(str(len(elems)))
    for eid, (etype, phys, conn) in enumerate(elems, start=1):
        node_str = " ".join(str(int(n) + 1) for n in conn)
        lines.append(f"{eid} {etype} 2 {phys} {phys} {node_str}")
    lines.append("$EndElements")
    return "\n".join(lines) + "\n"


def _read_sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$End"):
            current = None
        elif line.startswith("$"):
            current = line[1:]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return sections


def import_msh(text: str) -> Mesh:
    """Parse an MSH 2.2 ASCII mesh."""
    sections = _read_sections(text)
    if "MeshFormat" in sections:
        version = sections["MeshFormat"][0].split()[0]
        if not version.startswith("2"):
            raise MeshError(f"unsupported MSH version {version}")
    if "Nodes" not in sections:
        raise MeshError("missing $Nodes section")
    if "Elements" not in sections:
        raise MeshError("missing $Elements section")

    phys_names: dict[tuple[int, int], str] = {}
    for line in sections.get("PhysicalNames", [])[1:]:
        parts = line.split(None, 2)
        if len(parts) == 3:
            phys_names[(int(parts[0]), int(parts[1]))] = parts[2].strip('"')

    node_lines = sections["Nodes"]
    n_nodes = int(node_lines[0])
    if len(node_lines) - 1 != n_nodes:
        raise MeshError("node count does not match $Nodes header")
    ids = np.empty(n_nodes, dtype=np.int64)
    coords = np.empty((n_nodes, 3))
    for i, line in enumerate(node_lines[1:]):
        parts = line.split()
        ids[i] = int(parts[0])
        coords[i] = [float(parts[1]), float(parts[2]), float(parts[3])]
    id_map = {int(nid): i for i, nid in enumerate(ids)}

    volume, vol_kind = [], None
    surface, surf_kind, surf_tags = [], None, []
    node_groups: dict[str, list[int]] = {}
    elem_lines = sections["Elements"]
    if len(elem_lines) - 1 != int(elem_lines[0]):
        raise MeshError("element count does not match $Elements header")
    for line in elem_lines[1:]:
        parts = [int(v) for v in line.split()]
        etype, ntags = parts[1], parts[2]
        phys = parts[3] if ntags >= 1 else 0
        conn_raw = parts[3 + ntags:]
        try:
            conn = [id_map[n] for n in conn_raw]
        except KeyError as exc:
            raise MeshError(f"element references missing node {exc}") from exc
        if etype in _VOLUME_TYPES:
            kind, nn = _VOLUME_TYPES[etype]
            if len(conn) != nn:
                raise MeshError(f"element type {etype} needs {nn} nodes")
            if vol_kind not in (None, kind):
                raise MeshError("mixed volume element kinds are unsupported")
            vol_kind = kind
            volume.append(conn)
        elif etype in _SURFACE_TYPES:
            kind, nn = _SURFACE_TYPES[etype]
            if len(conn) != nn:
                raise MeshError(f"element type {etype} needs {nn} nodes")
            if surf_kind not in (None, kind):
                raise MeshError("mixed surface element kinds are unsupported")
            surf_kind = kind
            surface.append(conn)
            surf_tags.append(phys_names.get((2, phys), f"surface_{phys}"))
        elif etype == 15:
            name = phys_names.get((0, phys), f"group_{phys}")
            node_groups.setdefault(name, []).append(conn[0])
        else:
            raise MeshError(f"unsupported element type {etype}")

    if not volume:
        raise MeshError("mesh contains no volume elements")
    vol_kind = vol_kind or "tet4"
    if surf_kind is None:
        surf_kind = "tri3" if vol_kind == "tet4" else "tri6"
    mesh = Mesh(
        nodes=coords,
        volume_elements=np.asarray(volume, dtype=np.int64),
        volume_kind=vol_kind,
        surface_elements=(np.asarray(surface, dtype=np.int64) if surface
                          else np.zeros((0, 3 if surf_kind == "tri3" else 6),
                                        np.int64)),
        surface_kind=surf_kind,
        surface_tags=surf_tags,
        node_groups={k: np.array(sorted(v), dtype=np.int64)
                     for k, v in node_groups.items()},
    )
    mesh.validate()
    return mesh
