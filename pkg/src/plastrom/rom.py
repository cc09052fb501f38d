"""Online hyper-reduced Galerkin solver on generalized coordinates.

Kinematic constraints are inherited by the displacement basis, so the online
Newton iteration runs multiplier-free on the reduced mesh: internal variables
live only at the quadrature points of kept elements, stresses are lifted to
basis coordinates by Gappy reconstruction, and every step feeds the Riesz
error indicator.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import ConstraintSet, Discretization, LoadSpec
from .errors import NewtonError, PlastromError, SolverError
from .hyperreduction import EqRule, load_eq_rule, save_eq_rule
from .indicator import IndicatorData, build_indicator_data, evaluate_indicator
from .materials import ElastoplasticParams, StateBatch
from .materials.radial_return import return_map_batch
from .mesh import ReducedMesh, extract_reduced_mesh
from .reduction import (
    GappyReconstructor,
    InnerProduct,
    ReducedBasis,
    load_basis,
    save_basis,
)
from .solvers import NewtonConfig, SaddleSystem
from .voigt import elastic_matrix

_IND_MAGIC = b"PQSIND01"


@dataclass
class RomArtifacts:
    """Everything the online solver needs, built offline."""

    basis_u: ReducedBasis
    basis_sigma: ReducedBasis
    eq_volume: EqRule
    eq_surface: EqRule
    reduced_mesh: ReducedMesh
    indicator: IndicatorData
    centroid: ElastoplasticParams
    load: LoadSpec
    config: dict

    def validate(self, cons: ConstraintSet) -> None:
        Z = self.basis_u.modes
        if Z.shape[1] == 0:
            raise PlastromError("empty displacement basis")
        BZ = np.abs(cons.matrix @ Z).max(axis=0)
        scale = np.abs(Z).max(axis=0)
        if np.any(BZ > 1e-10 * scale):
            raise PlastromError(
                "displacement modes violate the kinematic constraints")
        n_entries = 6 * self.reduced_mesh.n_kept_volume \
            * self.reduced_mesh.parent.n_qp_per_volume
        if n_entries < self.basis_sigma.n_modes:
            raise PlastromError(
                f"reduced mesh exposes {n_entries} stress entries for "
                f"{self.basis_sigma.n_modes} stress modes")


def build_artifacts(disc: Discretization, cons: ConstraintSet, stiffness,
                    basis_u: ReducedBasis, basis_sigma: ReducedBasis,
                    eq_volume: EqRule, eq_surface: EqRule,
                    reduced_mesh: ReducedMesh, centroid: ElastoplasticParams,
                    load: LoadSpec, config: dict,
                    saddle: SaddleSystem | None = None,
                    previous_indicator: IndicatorData | None = None):
    """Assemble artifacts incl. the indicator data (Riesz solves)."""
    indicator = build_indicator_data(disc, cons, stiffness, basis_sigma,
                                     load, saddle=saddle,
                                     previous=previous_indicator)
    art = RomArtifacts(basis_u, basis_sigma, eq_volume, eq_surface,
                       reduced_mesh, indicator, centroid, load, dict(config))
    art.validate(cons)
    return art


@dataclass
class RomSolution:
    """Per-step reduced solution, indicator trace and timings."""

    times: np.ndarray
    load_scales: np.ndarray
    alpha_u: np.ndarray          # (K, N_u)
    alpha_sigma: np.ndarray      # (K, N_sigma)
    indicator_steps: np.ndarray  # (K,)
    indicator_avg: float
    newton_iters: np.ndarray
    wall_time: float             # solver core, seconds

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = (["step", "time", "load_scale", "newton_iters",
                       "indicator"]
                      + [f"alpha_u_{n + 1}" for n in
                         range(self.alpha_u.shape[1])]
                      + [f"alpha_sigma_{n + 1}" for n in
                         range(self.alpha_sigma.shape[1])])
            writer.writerow(header)
            for k in range(len(self.times)):
                row = [k + 1, f"{self.times[k]:.17g}",
                       f"{self.load_scales[k]:.17g}",
                       int(self.newton_iters[k]),
                       f"{self.indicator_steps[k]:.17g}"]
                row += [f"{v:.17g}" for v in self.alpha_u[k]]
                row += [f"{v:.17g}" for v in self.alpha_sigma[k]]
                writer.writerow(row)


class OnlineSolver:
    """Precomputed reduced operators for repeated online solves."""

    def __init__(self, disc: Discretization, artifacts: RomArtifacts,
                 config: NewtonConfig):
        red = artifacts.reduced_mesh
        if red.n_kept_volume == 0:
            raise SolverError("reduced mesh has no volume elements")
        self.disc = disc
        self.artifacts = artifacts
        self.config = config
        kept = red.kept_volume
        self.rho = red.volume_weights
        self.B_red = disc.B[kept]
        self.w_red = disc.w_vol[kept]
        Z = artifacts.basis_u.modes
        self.n_modes = Z.shape[1]
        self.Z_loc = Z[disc.tables.nodal[kept]]          # (m, ndloc, N_u)
        self.nq = disc.nq_per_el
        self.n_points = red.n_kept_volume * self.nq

        F_unit = disc.external_force(
            artifacts.load, 1.0, vol_idx=kept, rho_vol=self.rho,
            surf_idx=red.kept_surface, rho_surf=red.surface_weights)
        self.f_ext_red = Z.T @ F_unit                    # (N_u,)

        self.stress_mask = disc.stress_entries(kept)
        self.gappy = GappyReconstructor(
            artifacts.basis_sigma, self.stress_mask,
            disc.stress_ip_weights[self.stress_mask])

    def solve(self, params: ElastoplasticParams, times,
              load_scales) -> RomSolution:
        """March the reduced problem through the load program."""
        times = np.asarray(times, dtype=float)
        load_scales = np.asarray(load_scales, dtype=float)
        K = times.size
        N = self.n_modes
        alpha = np.zeros(N)
        states = StateBatch.zeros(self.n_points)
        sol_alpha = np.zeros((K, N))
        sol_sigma = np.zeros((K, self.artifacts.basis_sigma.n_modes))
        iters = np.zeros(K, dtype=np.int64)
        tic = time.perf_counter()
        for k in range(K):
            alpha, states, sigma_flat, it = self._step(
                alpha, states, params, load_scales[k], k)
            sol_alpha[k] = alpha
            sol_sigma[k] = self.gappy(sigma_flat)
            iters[k] = it
        wall = time.perf_counter() - tic
        avg, steps = evaluate_indicator(sol_sigma, load_scales,
                                        self.artifacts.indicator)
        return RomSolution(times.copy(), load_scales.copy(), sol_alpha,
                           sol_sigma, steps, avg, iters, wall)

    def _step(self, alpha_prev, states_prev, params, g, k):
        cfg = self.config
        alpha = alpha_prev.copy()
        f_ext = g * self.f_ext_red
        ref = float(np.linalg.norm(f_ext))
        for it in range(1, cfg.max_iters + 1):
            states_new, sigma, floc, tangent = self._system_eval(
                alpha - alpha_prev, states_prev, params, want_jacobian=True)
            r = np.einsum("m,mjn,mj->n", self.rho, self.Z_loc, floc) - f_ext
            num = float(np.linalg.norm(r))
            if (num <= cfg.eps_newt * ref) if ref > 0.0 else (num == 0.0):
                return alpha, states_new, states_new.stress.ravel(), it
            kloc = np.einsum("mqci,mq,mqcd,mqdj->mij", self.B_red,
                             self.w_red, tangent, self.B_red, optimize=True)
            K_N = np.einsum("m,mia,mij,mjb->ab", self.rho, self.Z_loc, kloc,
                            self.Z_loc, optimize=True)
            try:
                dalpha = np.linalg.solve(K_N, -r)
            except np.linalg.LinAlgError as exc:
                raise SolverError(
                    f"singular reduced Jacobian at step {k + 1}") from exc
            alpha = alpha + dalpha
        raise NewtonError(
            f"reduced Newton did not converge at step {k + 1} "
            f"(residual {num:.3e}, reference {ref:.3e})", final_norm=num)

    def _system_eval(self, dalpha, states_prev, params, want_jacobian):
        du_loc = np.einsum("mjn,n->mj", self.Z_loc, dalpha)
        deps = np.einsum("mqij,mj->mqi", self.B_red, du_loc, optimize=True)
        states_new, _, tangent = return_map_batch(
            states_prev, deps.reshape(self.n_points, 6), params,
            self.config.tol_rm,
            want_tangent=want_jacobian
            and self.config.tangent_mode == "consistent")
        m = self.B_red.shape[0]
        sigma = states_new.stress.reshape(m, self.nq, 6)
        if want_jacobian and self.config.tangent_mode == "elastic":
            De = elastic_matrix(params.E, params.nu)
            tangent = np.broadcast_to(De, (self.n_points, 6, 6))
        if want_jacobian:
            tangent = tangent.reshape(m, self.nq, 6, 6)
        floc = np.einsum("mqij,mq,mqi->mj", self.B_red, self.w_red, sigma,
                         optimize=True)
        return states_new, sigma, floc, tangent


# ----------------------------------------------------------------------
# artifact persistence
# ----------------------------------------------------------------------


def save_artifacts(directory, artifacts: RomArtifacts) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_basis(d / "basis_u", artifacts.basis_u)
    save_basis(d / "basis_sigma", artifacts.basis_sigma)
    save_eq_rule(d / "eq_volume", artifacts.eq_volume)
    save_eq_rule(d / "eq_surface", artifacts.eq_surface)
    ind = artifacts.indicator
    with open(d / "indicator.bin", "wb") as fh:
        fh.write(_IND_MAGIC)
        n_dof, n_sigma = ind.riesz_modes.shape
        np.array([n_dof, n_sigma], dtype="<i8").tofile(fh)
        np.ascontiguousarray(ind.riesz_modes, dtype="<f8").tofile(fh)
        np.ascontiguousarray(ind.riesz_load, dtype="<f8").tofile(fh)
        np.ascontiguousarray(ind.gram, dtype="<f8").tofile(fh)
    meta = {
        "centroid": {
            "E": artifacts.centroid.E, "nu": artifacts.centroid.nu,
            "sigma_y": artifacts.centroid.sigma_y,
            "n_pui": artifacts.centroid.n_pui,
            "a_pui": artifacts.centroid.a_pui,
        },
        "load": {
            "traction": list(artifacts.load.traction),
            "traction_group": artifacts.load.traction_group,
            "volume_force": list(artifacts.load.volume_force),
        },
        "config": artifacts.config,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2))


def load_artifacts(directory, disc: Discretization) -> RomArtifacts:
    d = Path(directory)
    if not (d / "meta.json").exists():
        raise PlastromError(f"{d}: not an artifacts directory")
    meta = json.loads((d / "meta.json").read_text())
    centroid = ElastoplasticParams(**meta["centroid"])
    load = LoadSpec(traction=tuple(meta["load"]["traction"]),
                    traction_group=meta["load"]["traction_group"],
                    volume_force=tuple(meta["load"]["volume_force"]))
    ip_u = InnerProduct.stiffness(disc.assemble_elastic_stiffness(centroid))
    ip_s = InnerProduct.diagonal(disc.stress_ip_weights)
    basis_u = load_basis(d / "basis_u", ip_u)
    basis_sigma = load_basis(d / "basis_sigma", ip_s)
    eq_volume = load_eq_rule(d / "eq_volume", disc.mesh.n_volume, "volume")
    eq_surface = load_eq_rule(d / "eq_surface", disc.mesh.n_surface,
                              "surface")
    reduced = extract_reduced_mesh(disc.mesh, eq_volume.weights,
                                   eq_surface.weights)
    raw = (d / "indicator.bin").read_bytes()
    if raw[:8] != _IND_MAGIC:
        raise PlastromError("corrupt indicator container")
    n_dof, n_sigma = (int(v) for v in
                      np.frombuffer(raw, dtype="<i8", count=2, offset=8))
    off = 8 + 16
    riesz_modes = np.frombuffer(raw, dtype="<f8", count=n_dof * n_sigma,
                                offset=off).copy().reshape(n_dof, n_sigma)
    off += n_dof * n_sigma * 8
    riesz_load = np.frombuffer(raw, dtype="<f8", count=n_dof,
                               offset=off).copy()
    off += n_dof * 8
    gram = np.frombuffer(raw, dtype="<f8", count=(n_sigma + 1)**2,
                         offset=off).copy().reshape(n_sigma + 1, n_sigma + 1)
    indicator = IndicatorData(riesz_modes, riesz_load, gram)
    return RomArtifacts(basis_u, basis_sigma, eq_volume, eq_surface, reduced,
                        indicator, centroid, load, meta.get("config", {}))
