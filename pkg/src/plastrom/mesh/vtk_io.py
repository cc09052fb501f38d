"""Legacy-VTK ASCII export of meshes with nodal and per-cell fields."""

from __future__ import annotations

import numpy as np

from .core import Mesh

_VTK_TYPES = {"tet4": 10, "tet10": 24, "tri3": 5, "tri6": 22}
# VTK quadratic tets order edges (0,1),(1,2),(0,2),(0,3),(1,3),(2,3)
_TET10_PERM = [0, 1, 2, 3, 4, 5, 6, 7, 9, 8]


def export_vtk(mesh: Mesh, point_data=None, cell_data=None,
               title="plastrom mesh") -> str:
    """Serialize mesh and fields; ``cell_data`` is per volume element."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    out = ["# vtk DataFile Version 3.0", title, "ASCII",
           "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_nodes} double"]
    for x, y, z in mesh.nodes:
        out.append(f"{x:.17g} {y:.17g} {z:.17g}")

    cells = []
    for conn in mesh.volume_elements:
        conn = conn[_TET10_PERM] if mesh.volume_kind == "tet10" else conn
        cells.append((_VTK_TYPES[mesh.volume_kind], conn))
    for conn in mesh.surface_elements:
        cells.append((_VTK_TYPES[mesh.surface_kind], conn))
    size = sum(len(c) + 1 for _, c in cells)
    out.append(f"CELLS {len(cells)} {size}")
    for _, conn in cells:
        out.append(f"{len(conn)} " + " ".join(str(int(n)) for n in conn))
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(t) for t, _ in cells]

    if point_data:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values)
            if values.ndim == 2 and values.shape[1] == 3:
                out.append(f"VECTORS {name} double")
                for v in values:
                    out.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
            else:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out += [f"{v:.17g}" for v in values.ravel()]
    if cell_data:
        out.append(f"CELL_DATA {len(cells)}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            padded = np.zeros(len(cells))
            padded[:values.size] = values
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out += [f"{v:.17g}" for v in padded]
    return "\n".join(out) + "\n"
