"""Element-wise and global assembly on two-level meshes.

All assembly paths (high-fidelity and empirically reweighted) share the same
batched kernels and the same ascending-element summation order, so running
with unit weights on the full mesh reproduces the plain assembly bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConstraintError, ConstitutiveError
from .materials import ElastoplasticParams, StateBatch
from .materials.radial_return import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL_RM,
    return_map_batch,
)
from .mesh import Mesh, build_restriction_tables, surface_geometry, volume_geometry
from .voigt import elastic_matrix

_COMPONENTS = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class LoadSpec:
    """Proportional loading data: constant shapes scaled by a ramp factor."""

    traction: tuple[float, float, float] = (0.0, 0.0, 0.0)
    traction_group: str = "top"
    volume_force: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def has_traction(self) -> bool:
        return any(v != 0.0 for v in self.traction)

    @property
    def has_volume_force(self) -> bool:
        return any(v != 0.0 for v in self.volume_force)


class Discretization:
    """Precomputed element geometry plus batched assembly kernels."""

    def __init__(self, mesh: Mesh):
        mesh.validate()
        self.mesh = mesh
        self.tables = build_restriction_tables(mesh)
        N, grads, w = volume_geometry(mesh)
        self.shape_vol = N                   # (nq, nn)
        self.w_vol = w                       # (ne, nq)
        self.B = self._strain_operator(grads)
        self.shape_surf, self.w_surf = surface_geometry(mesh)
        self.n_dof = mesh.n_dof
        self.n_qp = mesh.n_qp
        self.n_stress = 6 * mesh.n_qp
        self.nq_per_el = mesh.n_qp_per_volume

    @staticmethod
    def _strain_operator(grads: np.ndarray) -> np.ndarray:
        """B such that (engineering) strain = B @ u_loc, per element and qp."""
        ne, nq, nn, _ = grads.shape
        B = np.zeros((ne, nq, 6, 3 * nn))
        gx, gy, gz = grads[..., 0], grads[..., 1], grads[..., 2]
        B[:, :, 0, 0::3] = gx
        B[:, :, 1, 1::3] = gy
        B[:, :, 2, 2::3] = gz
        B[:, :, 3, 0::3] = gy
        B[:, :, 3, 1::3] = gx
        B[:, :, 4, 1::3] = gz
        B[:, :, 4, 2::3] = gy
        B[:, :, 5, 0::3] = gz
        B[:, :, 5, 2::3] = gx
        return B

    # ------------------------------------------------------------------
    # per-point bookkeeping
    # ------------------------------------------------------------------

    @property
    def qp_weights(self) -> np.ndarray:
        """Mapped quadrature weight of every volume quadrature point."""
        return self.w_vol.ravel()

    @property
    def stress_ip_weights(self) -> np.ndarray:
        """Diagonal stress inner product: each Voigt entry weighted by its
        quadrature point's mapped weight."""
        return np.repeat(self.qp_weights, 6)

    def qp_indices(self, elements: np.ndarray) -> np.ndarray:
        """Global quadrature-point indices of the given elements, flat."""
        return (elements[:, None] * self.nq_per_el
                + np.arange(self.nq_per_el)[None, :]).ravel()

    def stress_entries(self, elements: np.ndarray) -> np.ndarray:
        """Global stress-vector entries owned by the given elements, flat."""
        qp = self.qp_indices(elements)
        return (qp[:, None] * 6 + np.arange(6)[None, :]).ravel()

    # ------------------------------------------------------------------
    # element-level operations (exact Gauss evaluation)
    # ------------------------------------------------------------------

    def element_internal_force(self, q: int, sigma_qp) -> np.ndarray:
        """integral over element q of sigma : grad_s(test functions)."""
        sigma_qp = np.asarray(sigma_qp, dtype=float).reshape(self.nq_per_el, 6)
        return np.einsum("qij,q,qi->j", self.B[q], self.w_vol[q], sigma_qp)

    def element_external_force_volume(self, q: int, f_v) -> np.ndarray:
        nodal = np.einsum("q,qa->a", self.w_vol[q], self.shape_vol)
        return (nodal[:, None] * np.asarray(f_v, float)).ravel()

    def element_external_force_surface(self, q: int, f_s) -> np.ndarray:
        nodal = np.einsum("q,qa->a", self.w_surf[q], self.shape_surf)
        return (nodal[:, None] * np.asarray(f_s, float)).ravel()

    # ------------------------------------------------------------------
    # batched kernels
    # ------------------------------------------------------------------

    def strain_increments(self, du: np.ndarray, idx) -> np.ndarray:
        """Strain increments (m, nq, 6) on elements idx for a dof increment."""
        du_loc = du[self.tables.nodal[idx]]
        return np.einsum("mqij,mj->mqi", self.B[idx], du_loc, optimize=True)

    def update_states(self, du, states_prev: StateBatch, params, idx,
                      tol_rm=DEFAULT_TOL_RM, want_tangent=False,
                      tangent_mode="consistent"):
        """Return-map all points of elements idx.

        ``states_prev`` holds exactly the points of ``idx`` (element order).
        Returns (sigma_new (m, nq, 6), StateBatch, tangents or None).
        """
        m = len(idx)
        deps = self.strain_increments(du, idx).reshape(m * self.nq_per_el, 6)
        try:
            states_new, _, tangent = return_map_batch(
                states_prev, deps, params, tol_rm, DEFAULT_MAX_ITER,
                want_tangent=want_tangent and tangent_mode == "consistent")
        except ConstitutiveError as exc:
            element = idx[exc.point // self.nq_per_el]
            raise ConstitutiveError(
                f"return mapping failed in element {element}: {exc}",
                residual=exc.residual, point=exc.point) from exc
        sigma = states_new.stress.reshape(m, self.nq_per_el, 6)
        if want_tangent and tangent_mode == "elastic":
            De = elastic_matrix(params.E, params.nu)
            tangent = np.broadcast_to(De, (m * self.nq_per_el, 6, 6))
        if want_tangent:
            tangent = tangent.reshape(m, self.nq_per_el, 6, 6)
        return sigma, states_new, tangent

    def internal_forces(self, sigma, idx) -> np.ndarray:
        """Element internal force vectors (m, ndof_loc) for stresses sigma."""
        return np.einsum("mqij,mq,mqi->mj", self.B[idx], self.w_vol[idx],
                         sigma, optimize=True)

    def scatter(self, values_loc: np.ndarray, dof_rows: np.ndarray,
                out=None) -> np.ndarray:
        """Deterministic add-scatter of local vectors into a global one."""
        if out is None:
            out = np.zeros(self.n_dof)
        np.add.at(out, dof_rows.ravel(), values_loc.ravel())
        return out

    def external_force(self, load: LoadSpec, scale: float = 1.0, *,
                       vol_idx=None, rho_vol=None, surf_idx=None,
                       rho_surf=None) -> np.ndarray:
        """Weighted external force vector; unit weights reproduce the HF one."""
        F = np.zeros(self.n_dof)
        if scale == 0.0 or (not load.has_traction
                            and not load.has_volume_force):
            return F
        if load.has_volume_force:
            idx = np.arange(self.mesh.n_volume) if vol_idx is None else vol_idx
            rho = np.ones(len(idx)) if rho_vol is None else rho_vol
            nodal = np.einsum("mq,qa->ma", self.w_vol[idx], self.shape_vol)
            f = np.asarray(load.volume_force, float) * scale
            floc = (nodal[:, :, None] * f).reshape(len(idx), -1)
            self.scatter(rho[:, None] * floc, self.tables.nodal[idx], F)
        if load.has_traction and self.mesh.n_surface:
            group = self.mesh.surface_group(load.traction_group)
            if surf_idx is not None:
                group = np.intersect1d(group, surf_idx)
                rho_full = np.zeros(self.mesh.n_surface)
                rho_full[surf_idx] = (np.ones(len(surf_idx))
                                      if rho_surf is None else rho_surf)
                rho = rho_full[group]
            else:
                rho = np.ones(len(group))
            if len(group):
                nodal = np.einsum("mq,qa->ma", self.w_surf[group],
                                  self.shape_surf)
                t = np.asarray(load.traction, float) * scale
                floc = (nodal[:, :, None] * t).reshape(len(group), -1)
                self.scatter(rho[:, None] * floc,
                             self.tables.surface_nodal[group], F)
        return F

    def assemble_weighted(self, u, u_prev, states_prev: StateBatch,
                          params: ElastoplasticParams, load: LoadSpec,
                          load_scale: float, *, vol_idx=None, rho_vol=None,
                          surf_idx=None, rho_surf=None, want_jacobian=False,
                          tangent_mode="consistent", tol_rm=DEFAULT_TOL_RM):
        """Residual (and Jacobian) of the weighted two-level sum.

        Returns ``(R, K, sigma_new, states_new)`` where ``R = F_int - F_ext``
        and ``K`` is None unless requested.  ``states_prev`` holds the points
        of ``vol_idx`` only.
        """
        if vol_idx is None:
            vol_idx = np.arange(self.mesh.n_volume)
        if rho_vol is None:
            rho_vol = np.ones(len(vol_idx))
        du = u - u_prev
        sigma, states_new, tangent = self.update_states(
            du, states_prev, params, vol_idx, tol_rm,
            want_tangent=want_jacobian, tangent_mode=tangent_mode)
        floc = self.internal_forces(sigma, vol_idx)
        R = self.scatter(rho_vol[:, None] * floc, self.tables.nodal[vol_idx])
        R -= self.external_force(load, load_scale, vol_idx=vol_idx,
                                 rho_vol=rho_vol, surf_idx=surf_idx,
                                 rho_surf=rho_surf)
        K = None
        if want_jacobian:
            kloc = np.einsum("mqci,mq,mqcd,mqdj->mij", self.B[vol_idx],
                             self.w_vol[vol_idx], tangent, self.B[vol_idx],
                             optimize=True)
            kloc *= rho_vol[:, None, None]
            dof = self.tables.nodal[vol_idx]
            nd = dof.shape[1]
            rows = np.repeat(dof, nd, axis=1).ravel()
            cols = np.tile(dof, (1, nd)).ravel()
            K = sp.coo_matrix((kloc.ravel(), (rows, cols)),
                              shape=(self.n_dof, self.n_dof)).tocsr()
        return R, K, sigma, states_new

    # ------------------------------------------------------------------
    # high-fidelity wrappers (full mesh, unit weights)
    # ------------------------------------------------------------------

    def assemble_residual(self, u, u_prev, states_prev, params, load,
                          load_scale, tol_rm=DEFAULT_TOL_RM):
        R, _, _, states_new = self.assemble_weighted(
            u, u_prev, states_prev, params, load, load_scale, tol_rm=tol_rm)
        return R, states_new

    def assemble_jacobian(self, u, u_prev, states_prev, params, load,
                          load_scale, tangent_mode="consistent",
                          tol_rm=DEFAULT_TOL_RM):
        _, K, _, _ = self.assemble_weighted(
            u, u_prev, states_prev, params, load, load_scale,
            want_jacobian=True, tangent_mode=tangent_mode, tol_rm=tol_rm)
        return K

    def assemble_elastic_stiffness(self, params: ElastoplasticParams):
        """Stiffness of the linear-elastic problem (the energy-norm matrix)."""
        De = elastic_matrix(params.E, params.nu)
        kloc = np.einsum("mqci,mq,cd,mqdj->mij", self.B, self.w_vol, De,
                         self.B, optimize=True)
        dof = self.tables.nodal
        nd = dof.shape[1]
        rows = np.repeat(dof, nd, axis=1).ravel()
        cols = np.tile(dof, (1, nd)).ravel()
        return sp.coo_matrix((kloc.ravel(), (rows, cols)),
                             shape=(self.n_dof, self.n_dof)).tocsr()

    def nodal_force_of_stress_mode(self, zeta_sigma) -> np.ndarray:
        """F with (F, v) = integral of zeta_sigma : grad_s(v) over the mesh."""
        sigma = np.asarray(zeta_sigma, float).reshape(
            self.mesh.n_volume, self.nq_per_el, 6)
        idx = np.arange(self.mesh.n_volume)
        floc = self.internal_forces(sigma, idx)
        return self.scatter(floc, self.tables.nodal)


# ----------------------------------------------------------------------
# kinematic constraints
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BCSpec:
    """Homogeneous boundary conditions of the quarter-plate tension test."""

    fixed: tuple[tuple[str, str], ...] = (
        ("bottom", "y"), ("left", "x"), ("back", "z"))
    tie_group: str = "top"
    tie_component: str = "y"


@dataclass
class ConstraintSet:
    """Sparse kinematic relation matrix B with per-row labels."""

    matrix: sp.csr_matrix
    labels: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u


def build_constraints(mesh: Mesh, spec: BCSpec = BCSpec()) -> ConstraintSet:
    """One row per fixed dof plus equal-component ties on the loaded face."""
    rows, cols, vals, labels = [], [], [], []
    fixed_dofs: set[int] = set()
    r = 0
    for group, comp in spec.fixed:
        if group not in mesh.node_groups:
            raise ConstraintError(f"unknown node group {group!r}")
        nodes = np.sort(mesh.node_groups[group])
        if nodes.size == 0:
            raise ConstraintError(f"node group {group!r} is empty")
        c = _COMPONENTS[comp]
        for n in nodes:
            dof = 3 * int(n) + c
            if dof in fixed_dofs:
                raise ConstraintError(
                    f"dof {dof} fixed twice (group {group!r})")
            fixed_dofs.add(dof)
            rows.append(r)
            cols.append(dof)
            vals.append(1.0)
            labels.append(f"fix:{group}:{comp}:{n}")
            r += 1
    if spec.tie_group is not None:
        if spec.tie_group not in mesh.node_groups:
            raise ConstraintError(f"unknown node group {spec.tie_group!r}")
        nodes = np.sort(mesh.node_groups[spec.tie_group])
        if nodes.size == 0:
            raise ConstraintError(f"node group {spec.tie_group!r} is empty")
        c = _COMPONENTS[spec.tie_component]
        ref = int(nodes[0])
        for n in nodes[1:]:
            dof_a, dof_b = 3 * int(n) + c, 3 * ref + c
            if dof_a in fixed_dofs and dof_b in fixed_dofs:
                raise ConstraintError(
                    "tie row links two fixed dofs (rank deficient)")
            rows += [r, r]
            cols += [dof_a, dof_b]
            vals += [1.0, -1.0]
            labels.append(f"tie:{spec.tie_group}:{spec.tie_component}:"
                          f"{n}-{ref}")
            r += 1
    B = sp.csr_matrix((vals, (rows, cols)), shape=(r, mesh.n_dof))
    return ConstraintSet(B, labels)
