"""Riesz-representation error indicator for the hyper-reduced solver.

Each stress mode and the external load define a linear functional whose Riesz
element solves a constrained linear-elastic problem at the parameter
centroid.  The per-step indicator is the energy norm of the residual's Riesz
representative, evaluated online through the precomputed Gramian and
normalized by the load Riesz norm.
"""

from __future__ import annotations

import numpy as np

from .assembly import ConstraintSet, Discretization, LoadSpec
from .errors import PlastromError
from .reduction import ReducedBasis
from .solvers import SaddleSystem


class IndicatorData:
    """Riesz elements, their Gramian, and the load normalization."""

    def __init__(self, riesz_modes, riesz_load, gram):
        self.riesz_modes = riesz_modes          # (N_dof, N_sigma)
        self.riesz_load = riesz_load            # (N_dof,)
        self.gram = gram                        # (N_sigma+1, N_sigma+1)
        self.load_norm_sq = float(gram[-1, -1])
        if self.load_norm_sq <= 0.0:
            raise PlastromError(
                "zero load Riesz norm: cannot normalize the indicator")
        self.gram_normalized = gram / self.load_norm_sq

    @property
    def n_modes(self) -> int:
        return self.riesz_modes.shape[1]


def compute_riesz_elements(saddle: SaddleSystem, forces: np.ndarray):
    """Solve K psi + B^T lam = F, B psi = 0 for every force column."""
    forces = np.atleast_2d(forces.T).T
    out = np.empty_like(forces, dtype=float)
    for j in range(forces.shape[1]):
        out[:, j], _ = saddle.solve(forces[:, j])
    return out


def build_indicator_data(disc: Discretization, cons: ConstraintSet,
                         stiffness, basis_sigma: ReducedBasis,
                         load: LoadSpec, saddle: SaddleSystem | None = None,
                         previous: IndicatorData | None = None):
    """Assemble Riesz elements and their Gramian under the energy norm.

    ``stiffness`` is the centroid elastic matrix K; pass a prefactorized
    ``saddle`` to reuse it.  When ``previous`` is given and the stress basis
    is hierarchical, only the Riesz elements of the new modes are solved.
    """
    if saddle is None:
        saddle = SaddleSystem(stiffness, cons.matrix)
    n_sigma = basis_sigma.n_modes
    n_reuse = 0
    riesz_load = None
    if previous is not None and previous.n_modes <= n_sigma:
        n_reuse = previous.n_modes
        riesz_load = previous.riesz_load
    riesz_modes = np.zeros((disc.n_dof, n_sigma))
    if n_reuse:
        riesz_modes[:, :n_reuse] = previous.riesz_modes
    for n in range(n_reuse, n_sigma):
        F = disc.nodal_force_of_stress_mode(basis_sigma.modes[:, n])
        riesz_modes[:, n], _ = saddle.solve(F)
    if riesz_load is None:
        F_load = disc.external_force(load, 1.0)
        riesz_load, _ = saddle.solve(F_load)

    psi = np.column_stack([riesz_modes, riesz_load])
    gram = psi.T @ (stiffness @ psi)
    gram = 0.5 * (gram + gram.T)
    return IndicatorData(riesz_modes, riesz_load, gram)


def evaluate_indicator(alpha_sigma: np.ndarray, load_scales: np.ndarray,
                       data: IndicatorData):
    """Time-averaged indicator and its per-step values.

    ``alpha_sigma`` has shape (K, N_sigma); per step the squared indicator is
    the normalized Gramian quadratic form of ``[alpha; -g]`` divided by
    ``g^2`` (proportional loading).  Steps with zero load scale fall back to
    unit-load normalization, which makes a zero stress state report zero.
    """
    alpha_sigma = np.atleast_2d(np.asarray(alpha_sigma, dtype=float))
    load_scales = np.asarray(load_scales, dtype=float)
    K = alpha_sigma.shape[0]
    if load_scales.shape != (K,):
        raise PlastromError("one load scale required per step")
    if alpha_sigma.shape[1] != data.n_modes:
        raise PlastromError(
            f"coordinate vectors of length {alpha_sigma.shape[1]} do not "
            f"match {data.n_modes} stress modes")
    Smm = data.gram[:-1, :-1]
    SmL = data.gram[:-1, -1]
    SLL = data.load_norm_sq
    per_step = np.empty(K)
    for k in range(K):
        a = alpha_sigma[k]
        g = load_scales[k]
        val = a @ Smm @ a - 2.0 * g * (a @ SmL) + g * g * SLL
        norm = (g * g * SLL) if g != 0.0 else SLL
        per_step[k] = np.sqrt(max(val, 0.0) / norm)
    avg = float(np.sqrt(np.mean(per_step**2)))
    return avg, per_step


def dual_norm_direct(disc: Discretization, saddle: SaddleSystem, stiffness,
                     sigma_field: np.ndarray, load: LoadSpec,
                     load_scale: float, load_norm_sq: float) -> float:
    """Brute-force normalized dual norm of the residual of a stress field.

    Assembles the full weak residual of ``sigma_field`` against the scaled
    load, solves one constrained Riesz problem and measures its energy norm;
    the Gramian-based indicator must agree with this to rounding.
    """
    F = disc.nodal_force_of_stress_mode(sigma_field)
    F -= disc.external_force(load, load_scale)
    psi, _ = saddle.solve(F)
    val = float(psi @ (stiffness @ psi))
    norm = load_scale**2 * load_norm_sq if load_scale != 0.0 else load_norm_sq
    return float(np.sqrt(max(val, 0.0) / norm))
