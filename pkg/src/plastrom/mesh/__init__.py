from .core import (
    QUADRATURE,
    Mesh,
    ReducedMesh,
    RestrictionTables,
    build_restriction_tables,
    extract_reduced_mesh,
    shape_functions,
    surface_geometry,
    volume_geometry,
)
from .generate import (
    GROUP_BACK,
    GROUP_BOTTOM,
    GROUP_LEFT,
    GROUP_TOP,
    generate_plate_with_hole,
)
from .msh_io import export_msh, import_msh
from .vtk_io import export_vtk

__all__ = [
    "Mesh",
    "ReducedMesh",
    "RestrictionTables",
    "QUADRATURE",
    "shape_functions",
    "volume_geometry",
    "surface_geometry",
    "build_restriction_tables",
    "extract_reduced_mesh",
    "generate_plate_with_hole",
    "GROUP_BOTTOM",
    "GROUP_LEFT",
    "GROUP_BACK",
    "GROUP_TOP",
    "import_msh",
    "export_msh",
    "export_vtk",
]
