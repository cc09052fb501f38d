"""Shared fixtures: tiny hand-built meshes and a coarse plate problem."""

import numpy as np
import pytest

from plastrom.assembly import Discretization, LoadSpec, build_constraints
from plastrom.materials import ElastoplasticParams
from plastrom.mesh import Mesh, generate_plate_with_hole
from plastrom.solvers import NewtonConfig, hf_time_march


def make_single_tet() -> Mesh:
    """Unit reference tetrahedron with one boundary face tagged."""
    nodes = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    return Mesh(
        nodes=nodes,
        volume_elements=np.array([[0, 1, 2, 3]]),
        volume_kind="tet4",
        surface_elements=np.array([[0, 1, 2]]),
        surface_kind="tri3",
        surface_tags=["base"],
        node_groups={"all": np.arange(4)},
    )


def make_cube(n=1) -> Mesh:
    """Unit cube split into 6n^3 tetrahedra (Kuhn subdivision per cell)."""
    pts = np.linspace(0.0, 1.0, n + 1)
    nodes = np.array([[x, y, z] for z in pts for y in pts for x in pts])

    def nid(i, j, k):
        return i + (n + 1) * (j + (n + 1) * k)

    kuhn = [(0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7), (0, 2, 6, 7),
            (0, 4, 5, 7), (0, 4, 6, 7)]
    corners = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0),
               (0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)]
    tets = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                ids = [nid(i + c[0], j + c[1], k + c[2]) for c in corners]
                for tet in kuhn:
                    conn = [ids[v] for v in tet]
                    p = nodes[conn]
                    if np.linalg.det(p[1:] - p[0]) < 0:
                        conn[2], conn[3] = conn[3], conn[2]
                    tets.append(conn)
    return Mesh(
        nodes=nodes,
        volume_elements=np.array(tets, dtype=np.int64),
        volume_kind="tet4",
        surface_elements=np.zeros((0, 3), dtype=np.int64),
        surface_kind="tri3",
        surface_tags=[],
        node_groups={
            "x0": np.flatnonzero(nodes[:, 0] == 0.0),
            "y0": np.flatnonzero(nodes[:, 1] == 0.0),
            "z0": np.flatnonzero(nodes[:, 2] == 0.0),
        },
    )


@pytest.fixture(scope="session")
def params():
    return ElastoplasticParams()


@pytest.fixture(scope="session")
def plate_mesh():
    return generate_plate_with_hole(10, 10, 1, 2, 1)


@pytest.fixture(scope="session")
def plate_disc(plate_mesh):
    return Discretization(plate_mesh)


@pytest.fixture(scope="session")
def plate_cons(plate_mesh):
    return build_constraints(plate_mesh)


@pytest.fixture(scope="session")
def plate_load():
    return LoadSpec(traction=(0.0, 120.0, 0.0))


@pytest.fixture(scope="session")
def newton_cfg():
    return NewtonConfig()


@pytest.fixture(scope="session")
def plate_trajectory(plate_disc, plate_cons, params, plate_load, newton_cfg):
    """Ten-step HF solve of the coarse plate at the default parameters."""
    t = np.linspace(0.1, 1.0, 10)
    return hf_time_march(plate_disc, plate_cons, params, plate_load, t, t,
                         newton_cfg)
