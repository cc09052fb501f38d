"""Element-wise empirical quadrature: dictionary build and sparse NNLS.

Each mesh level (volume, loaded surface) gets its own dictionary whose rows
are per-element contributions to training residuals (internal and external
force parts separated) plus one row conserving the level measure.  Rows are
normalized by their full-mesh totals so the right-hand side is a vector of
ones; rows with vanishing totals are dropped and logged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import Discretization, LoadSpec
from .errors import PlastromError
from .mesh import extract_reduced_mesh
from .reduction import ReducedBasis

LOG = logging.getLogger(__name__)

#: a normalization group whose largest full-mesh total is below this
#: fraction of its absolute element mass carries no stable constraint and
#: is dropped instead of being divided by a vanishing number.
ROW_DROP_RTOL = 1e-12

#: sampled-element oversampling of the Gappy fit: masked least squares on
#: exactly as many elements as stress modes overfits, so rule builders keep
#: this many times more elements than modes.
GAPPY_SUPPORT_FACTOR = 3


@dataclass
class Dictionary:
    """Normalized constraint rows for one mesh level.

    Rows are scaled by the largest full-mesh total of their normalization
    group (all internal rows of one snapshot, all external rows, the measure
    row by itself), so each right-hand side entry lies in [-1, 1] and the
    delta criterion bounds the weighted-residual error of every training
    direction at the force scale of its snapshot.  Equilibrium makes
    individual internal totals vanish for modes orthogonal to the load, so
    per-row normalization would either blow up or silently discard exactly
    the constraints the online solver relies on.
    """

    G: np.ndarray                    # (n_rows, n_elements)
    y: np.ndarray                    # (n_rows,) in [-1, 1]; measure row = 1
    rows: list[tuple] = field(default_factory=list)   # (kind, mode, snap)
    dropped: list[tuple] = field(default_factory=list)
    level: str = "volume"

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]


@dataclass
class EqRule:
    """Sparse non-negative quadrature weights for one mesh level."""

    weights: np.ndarray          # dense over the level, zeros off support
    achieved_residual: float     # ||G rho - y||_2 / ||y||_2
    delta: float
    converged: bool
    level: str = "volume"
    n_iterations: int = 0

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0.0)

    @property
    def n_selected(self) -> int:
        return int(self.support.size)


def _normalize_rows(G_raw, row_keys, level):
    """Group-wise normalization; groups with vanishing scale are dropped."""
    totals = G_raw.sum(axis=1)
    if totals.size == 0:
        raise PlastromError(f"empty {level} dictionary")

    def group_of(key):
        kind = key[0]
        return ("int", key[2]) if kind == "int" else (kind,)

    groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(row_keys):
        groups.setdefault(group_of(key), []).append(i)

    keep = np.zeros(len(row_keys), dtype=bool)
    scale = np.ones(len(row_keys))
    for rows_idx in groups.values():
        idx = np.array(rows_idx)
        s = np.abs(totals[idx]).max()
        mass = np.abs(G_raw[idx]).sum(axis=1).max()
        if s > ROW_DROP_RTOL * mass and mass > 0.0:
            keep[idx] = True
            scale[idx] = s
    if not np.any(keep):
        raise PlastromError(
            f"no {level} dictionary rows survive normalization")
    dropped = [row_keys[i] for i in np.flatnonzero(~keep)]
    if dropped:
        LOG.warning("dropping %d degenerate dictionary row(s) on level %s",
                    len(dropped), level)
    G = G_raw[keep] / scale[keep, None]
    y = totals[keep] / scale[keep]
    rows = [row_keys[i] for i in np.flatnonzero(keep)]
    return Dictionary(G=G, y=y, rows=rows, dropped=dropped, level=level)


def build_volume_dictionary(disc: Discretization, basis_u: ReducedBasis,
                            stress_snapshots, load: LoadSpec) -> Dictionary:
    """Manifold rows (per mode, per stress snapshot), external-force rows
    (per mode, when a volume load exists) and the volume-measure row."""
    S = np.asarray(stress_snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    n_snap = S.shape[1]
    ne, nq = disc.mesh.n_volume, disc.nq_per_el
    Z = basis_u.modes
    n_modes = Z.shape[1]
    Z_loc = Z[disc.tables.nodal]                         # (ne, ndloc, Nu)
    mode_strain = np.einsum("eqij,ejn->eqin", disc.B, Z_loc, optimize=True)
    weighted = disc.w_vol[:, :, None, None] * mode_strain
    sig = S.T.reshape(n_snap, ne, nq, 6)
    # internal rows: r[n, s, e] = sum_q w σ_s : eps(ζ_n)
    r_int = np.einsum("eqcn,seqc->nse", weighted, sig, optimize=True)

    keys = [("int", n, s) for n in range(n_modes) for s in range(n_snap)]
    G_rows = [r_int.reshape(n_modes * n_snap, ne)] if n_modes else []

    if load.has_volume_force and n_modes:
        nodal = np.einsum("eq,qa->ea", disc.w_vol, disc.shape_vol)
        f = np.asarray(load.volume_force, float)
        floc = (nodal[:, :, None] * f).reshape(ne, -1)
        r_ext = np.einsum("ej,ejn->ne", floc, Z_loc, optimize=True)
        G_rows.append(r_ext)
        keys += [("ext", n, None) for n in range(n_modes)]

    G_rows.append(disc.mesh.volume_measures()[None, :])
    keys.append(("measure", None, None))
    G_raw = np.vstack(G_rows)
    return _normalize_rows(G_raw, keys, "volume")


def build_surface_dictionary(disc: Discretization, basis_u: ReducedBasis,
                             load: LoadSpec) -> Dictionary:
    """Traction rows per mode plus the surface-measure row."""
    mesh = disc.mesh
    if mesh.n_surface == 0:
        raise PlastromError("mesh has no surface elements")
    ns = mesh.n_surface
    Z = basis_u.modes
    keys = []
    G_rows = []
    if load.has_traction and Z.shape[1]:
        group = mesh.surface_group(load.traction_group)
        nodal = np.einsum("eq,qa->ea", disc.w_surf[group], disc.shape_surf)
        t = np.asarray(load.traction, float)
        floc = (nodal[:, :, None] * t).reshape(len(group), -1)
        Z_loc = Z[disc.tables.surface_nodal[group]]
        vals = np.einsum("ej,ejn->ne", floc, Z_loc, optimize=True)
        r_ext = np.zeros((Z.shape[1], ns))
        r_ext[:, group] = vals
        G_rows.append(r_ext)
        keys += [("ext", n, None) for n in range(Z.shape[1])]
    G_rows.append(mesh.surface_measures()[None, :])
    keys.append(("measure", None, None))
    return _normalize_rows(np.vstack(G_rows), keys, "surface")


def _criterion(residual, y, delta, norm_y, strict_rows=None):
    """Aggregate l2 stop test plus strict per-row bounds on chosen rows."""
    if np.linalg.norm(residual) > delta * norm_y:
        return False
    if strict_rows is None or len(strict_rows) == 0:
        return True
    ref = np.maximum(np.abs(y[strict_rows]), 1e-12 * np.abs(y).max())
    return bool(np.all(np.abs(residual[strict_rows]) <= delta * ref))


def nnls_sparse(G, y, delta, max_iter=None, strict_rows=None, min_support=0):
    """Lawson-Hanson active-set NNLS with delta-relative early stopping.

    Iterations stop at the first feasible iterate whose residual satisfies
    ``||G rho - y||_2 <= delta ||y||_2``; rows listed in ``strict_rows``
    (the measure-conservation rows) must additionally be met to ``delta``
    individually, and at least ``min_support`` columns must carry weight
    (downstream reconstruction needs a minimum of sampled elements).
    Returns ``(weights, achieved, converged, n_outer)``; a stalled solve
    reports its best weights with ``converged=False``.

    Columns are equilibrated to unit norm internally so the gradient-based
    candidate selection and its stationarity test are scale-free; ties pick
    the lowest column index.
    """
    G = np.asarray(G, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = G.shape
    if m == 0 or n == 0:
        raise PlastromError("empty dictionary passed to nnls_sparse")
    if delta <= 0:
        raise PlastromError("delta must be positive")
    if max_iter is None:
        max_iter = max(10 * n, 100)
    norm_y = np.linalg.norm(y)
    rho = np.zeros(n)
    resid = y.copy()
    if min_support <= 0 and (norm_y == 0.0
                             or _criterion(resid, y, delta, norm_y,
                                           strict_rows)):
        return rho, 0.0 if norm_y == 0.0 else 1.0, True, 0

    col_norm = np.linalg.norm(G, axis=0)
    usable = col_norm > 0.0
    scale = np.where(usable, col_norm, 1.0)
    Gs = G / scale
    rho_s = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    banned = ~usable                 # columns rejected as unable to progress
    res_norm = norm_y
    outer = 0
    while outer < max_iter:
        w = Gs.T @ resid
        w[active | banned] = -np.inf
        j = int(np.argmax(w))
        if not w[j] > 0.0:
            break                    # KKT point of the non-negative problem
        active[j] = True
        outer += 1
        for _ in range(n + 1):
            cols = np.flatnonzero(active)
            z, *_ = np.linalg.lstsq(Gs[:, cols], y, rcond=None)
            if np.all(z > 0.0):
                rho_s = np.zeros(n)
                rho_s[cols] = z
                break
            bad = z <= 0.0
            ratios = rho_s[cols][bad] / (rho_s[cols][bad] - z[bad])
            alpha = float(ratios.min())
            rho_s[cols] = rho_s[cols] + alpha * (z - rho_s[cols])
            rho_s[cols[bad][int(np.argmin(ratios))]] = 0.0
            active = rho_s > 0.0
        resid = y - Gs @ rho_s
        new_norm = float(np.linalg.norm(resid))
        if not active[j] and new_norm >= res_norm * (1.0 - 1e-12):
            # degenerate column: added, immediately ejected, no progress
            banned[j] = True
        res_norm = new_norm
        if (rho_s > 0.0).sum() >= min_support \
                and _criterion(resid, y, delta, norm_y, strict_rows):
            rho = rho_s / scale
            return rho, res_norm / norm_y, True, outer
    rho = rho_s / scale
    return rho, float(np.linalg.norm(resid) / norm_y), False, outer


def _measure_rows(dictionary: Dictionary) -> np.ndarray:
    return np.array([i for i, key in enumerate(dictionary.rows)
                     if key[0] == "measure"], dtype=np.int64)


def empirical_quadrature(disc: Discretization, basis_u: ReducedBasis,
                         stress_snapshots, load: LoadSpec, delta: float,
                         min_volume_support: int = 0):
    """Per-level EQ rules plus the induced reduced mesh.

    Returns ``(volume_rule, surface_rule, reduced_mesh)``; the surface rule
    is empty when no surface level exists or carries no load.  A loose
    ``delta`` can be satisfied by very few elements; callers that feed the
    sampled stresses into a Gappy fit pass ``min_volume_support`` to keep
    the mask solvable.
    """
    vol_dict = build_volume_dictionary(disc, basis_u, stress_snapshots, load)
    weights, achieved, converged, iters = nnls_sparse(
        vol_dict.G, vol_dict.y, delta, strict_rows=_measure_rows(vol_dict),
        min_support=min_volume_support)
    if not converged:
        LOG.warning("volume EQ did not reach delta=%.1e (achieved %.3e)",
                    delta, achieved)
    rule_vol = EqRule(weights, achieved, delta, converged, "volume", iters)

    if disc.mesh.n_surface and load.has_traction:
        surf_dict = build_surface_dictionary(disc, basis_u, load)
        weights, achieved, converged, iters = nnls_sparse(
            surf_dict.G, surf_dict.y, delta,
            strict_rows=_measure_rows(surf_dict))
        if not converged:
            LOG.warning("surface EQ did not reach delta=%.1e (achieved %.3e)",
                        delta, achieved)
        rule_surf = EqRule(weights, achieved, delta, converged, "surface",
                           iters)
    else:
        rule_surf = EqRule(np.zeros(disc.mesh.n_surface), 0.0, delta, True,
                           "surface", 0)

    reduced = extract_reduced_mesh(disc.mesh, rule_vol.weights,
                                   rule_surf.weights)
    return rule_vol, rule_surf, reduced


def save_eq_rule(base_path, rule: EqRule):
    """CSV of (element_index, weight) plus JSON metadata."""
    import json
    from pathlib import Path

    base = Path(base_path)
    lines = ["element_index,weight"]
    for q in rule.support:
        lines.append(f"{q},{rule.weights[q]:.17g}")
    base.with_suffix(".csv").write_text("\r\n".join(lines) + "\r\n")
    base.with_suffix(".json").write_text(json.dumps({
        "level": rule.level,
        "delta": rule.delta,
        "achieved_residual": rule.achieved_residual,
        "converged": rule.converged,
        "n_selected": rule.n_selected,
        "n_elements": int(rule.weights.size),
        "n_iterations": rule.n_iterations,
    }, indent=2))


def load_eq_rule(base_path, n_elements: int, level: str) -> EqRule:
    import json
    from pathlib import Path

    base = Path(base_path)
    meta = json.loads(base.with_suffix(".json").read_text())
    weights = np.zeros(n_elements)
    text = base.with_suffix(".csv").read_text().strip().splitlines()
    for line in text[1:]:
        if not line.strip():
            continue
        idx, val = line.split(",")
        weights[int(idx)] = float(val)
    return EqRule(weights, meta["achieved_residual"], meta["delta"],
                  meta["converged"], level, meta.get("n_iterations", 0))
