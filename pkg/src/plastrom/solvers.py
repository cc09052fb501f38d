"""Saddle-point linear solves, dualized Newton iteration, HF time marching.

The Newton stopping test is the relative criterion
``||R + B^T lam||_inf / ||B^T lam - F_ext||_inf <= eps_newt`` (the
denominator collects external forces and support reactions).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import ConstraintSet, Discretization, LoadSpec
from .errors import NewtonError, SolverError
from .materials import ElastoplasticParams, StateBatch

_TRAJ_MAGIC = b"PQSTRAJ1"


@dataclass(frozen=True)
class NewtonConfig:
    eps_newt: float = 1e-7
    max_iters: int = 30
    tangent_mode: str = "consistent"   # consistent | elastic
    tol_rm: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.eps_newt < 1.0:
            raise ValueError("eps_newt must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tangent_mode not in ("consistent", "elastic"):
            raise ValueError(f"unknown tangent mode {self.tangent_mode!r}")


class SaddleSystem:
    """LU factorization of the bordered matrix [[K, B^T], [B, 0]].

    One step of iterative refinement keeps the constraint rows satisfied
    near machine precision even when the solution scale is small.
    """

    def __init__(self, K: sp.spmatrix, B: sp.spmatrix | None):
        self.n = K.shape[0]
        self.nd = 0 if B is None else B.shape[0]
        if self.nd:
            self.matrix = sp.bmat([[K, B.T], [B, None]], format="csc")
        else:
            self.matrix = sp.csc_matrix(K)
        try:
            self.lu = splu(self.matrix)
        except RuntimeError as exc:
            raise SolverError(f"saddle factorization failed: {exc}") from exc

    def solve(self, rhs_u: np.ndarray, rhs_c: np.ndarray | None = None):
        rhs = np.concatenate(
            [rhs_u, np.zeros(self.nd) if rhs_c is None else rhs_c])
        x = self.lu.solve(rhs)
        x += self.lu.solve(rhs - self.matrix @ x)
        if not np.all(np.isfinite(x)):
            raise SolverError("singular saddle-point system")
        return x[:self.n], x[self.n:]


def solve_saddle(K, B, rhs_u, rhs_c=None):
    """One-shot solve of K du + B^T dlam = rhs_u, B du = rhs_c."""
    return SaddleSystem(K, B).solve(rhs_u, rhs_c)


def kernel_projector(saddle: SaddleSystem, B):
    """Energy-orthogonal projector onto ker(B), for basis purification.

    POD modes divided by small singular values amplify the rounding-level
    constraint violation of the snapshots; this projector restores
    ``B zeta = 0`` to solver accuracy with a minimal-energy correction.
    """

    def project(V: np.ndarray) -> np.ndarray:
        V2 = V[:, None] if V.ndim == 1 else V
        out = V2.copy()
        zero = np.zeros(saddle.n)
        for j in range(V2.shape[1]):
            delta, _ = saddle.solve(zero, B @ V2[:, j])
            out[:, j] -= delta
        return out[:, 0] if V.ndim == 1 else out

    return project


@dataclass
class NewtonResult:
    u: np.ndarray
    lam: np.ndarray
    states: StateBatch
    sigma: np.ndarray                 # (ne, nq, 6) converged stresses
    history: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history)


def newton_solve(disc: Discretization, cons: ConstraintSet,
                 params: ElastoplasticParams, load: LoadSpec,
                 load_scale: float, u_prev: np.ndarray, lam_prev: np.ndarray,
                 states_prev: StateBatch, config: NewtonConfig):
    """Solve one quasi-static step; first iterate is the previous solution."""
    B = cons.matrix
    u = u_prev.copy()
    lam = lam_prev.copy()
    F_ext = disc.external_force(load, load_scale)
    history = []
    for _ in range(config.max_iters):
        R, K, sigma, states_new = disc.assemble_weighted(
            u, u_prev, states_prev, params, load, load_scale,
            want_jacobian=True, tangent_mode=config.tangent_mode,
            tol_rm=config.tol_rm)
        reaction = B.T @ lam
        num = float(np.abs(R + reaction).max()) if R.size else 0.0
        den = float(np.abs(reaction - F_ext).max())
        entry = {"residual": num, "reference": den, "correction": None}
        history.append(entry)
        if (num <= config.eps_newt * den) if den > 0.0 else (num == 0.0):
            return NewtonResult(u, lam, states_new, sigma, history)
        saddle = SaddleSystem(K, B)
        du, dlam = saddle.solve(-(R + reaction), -(B @ u))
        entry["correction"] = float(np.linalg.norm(du))
        u = u + du
        lam = lam + dlam
    raise NewtonError(
        f"Newton did not converge in {config.max_iters} iterations "
        f"(last residual {history[-1]['residual']:.3e}, "
        f"reference {history[-1]['reference']:.3e})",
        final_norm=history[-1]["residual"], history=history)


@dataclass
class Trajectory:
    """Per-step HF solution: displacements, multipliers, stresses, state."""

    times: np.ndarray        # (K,)
    load_scales: np.ndarray  # (K,)
    u: np.ndarray            # (K, N)
    lam: np.ndarray          # (K, N_d)
    sigma: np.ndarray        # (K, N_g) quadrature-point-major Voigt
    eps_p: np.ndarray        # (K, N_g)
    p: np.ndarray            # (K, N_qp)
    newton_iters: np.ndarray
    wall_times: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.times)


def _advance_step(disc, cons, params, load, scale_target, scale_prev, u, lam,
                  states, config, depth=0):
    """Newton step with up to three load-increment halvings on failure."""
    try:
        return newton_solve(disc, cons, params, load, scale_target, u, lam,
                            states, config), depth
    except NewtonError:
        if depth >= 3:
            raise
        mid = 0.5 * (scale_prev + scale_target)
        res, _ = _advance_step(disc, cons, params, load, mid, scale_prev, u,
                               lam, states, config, depth + 1)
        return _advance_step(disc, cons, params, load, scale_target, mid,
                             res.u, res.lam, res.states, config, depth + 1)


def hf_time_march(disc: Discretization, cons: ConstraintSet,
                  params: ElastoplasticParams, load: LoadSpec,
                  times: np.ndarray, load_scales: np.ndarray,
                  config: NewtonConfig) -> Trajectory:
    """March the quasi-static problem through the given load program.

    All fields start from zero.  A step that fails to converge is retried
    with halved load increments (at most 3 halvings) before giving up.
    """
    times = np.asarray(times, dtype=float)
    load_scales = np.asarray(load_scales, dtype=float)
    if times.size < 1 or times.size != load_scales.size:
        raise SolverError("need matching, non-empty times and load scales")
    K = times.size
    n_d = cons.n_rows
    u = np.zeros(disc.n_dof)
    lam = np.zeros(n_d)
    states = StateBatch.zeros(disc.n_qp)
    traj = Trajectory(
        times=times.copy(), load_scales=load_scales.copy(),
        u=np.zeros((K, disc.n_dof)), lam=np.zeros((K, n_d)),
        sigma=np.zeros((K, disc.n_stress)),
        eps_p=np.zeros((K, disc.n_stress)), p=np.zeros((K, disc.n_qp)),
        newton_iters=np.zeros(K, dtype=np.int64), wall_times=np.zeros(K))
    scale_prev = 0.0
    for k in range(K):
        tic = time.perf_counter()
        try:
            res, _ = _advance_step(disc, cons, params, load, load_scales[k],
                                   scale_prev, u, lam, states, config)
        except NewtonError as exc:
            raise NewtonError(f"time step {k + 1}/{K} failed: {exc}",
                              final_norm=exc.final_norm,
                              history=exc.history) from exc
        traj.wall_times[k] = time.perf_counter() - tic
        u, lam, states = res.u, res.lam, res.states
        traj.u[k] = u
        traj.lam[k] = lam
        traj.sigma[k] = states.stress.ravel()
        traj.eps_p[k] = states.eps_p.ravel()
        traj.p[k] = states.p
        traj.newton_iters[k] = res.iterations
        scale_prev = load_scales[k]
    return traj


def save_trajectory(base_path, traj: Trajectory, meta: dict | None = None):
    """Binary container (little-endian float64) plus a JSON sidecar."""
    base = Path(base_path)
    K, N = traj.u.shape
    Nd = traj.lam.shape[1]
    Ng = traj.sigma.shape[1]
    Nqp = traj.p.shape[1]
    with open(base.with_suffix(".bin"), "wb") as fh:
        fh.write(_TRAJ_MAGIC)
        np.array([N, Ng, Nd, K, Nqp], dtype="<i8").tofile(fh)
        for arr in (traj.times, traj.load_scales, traj.u, traj.lam,
                    traj.sigma, traj.eps_p, traj.p):
            np.ascontiguousarray(arr, dtype="<f8").tofile(fh)
    sidecar = {
        "sizes": {"N": N, "N_g": Ng, "N_d": Nd, "K": K, "N_qp": Nqp},
        "newton_iters": traj.newton_iters.tolist(),
        "wall_times": traj.wall_times.tolist(),
    }
    sidecar.update(meta or {})
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def load_trajectory(base_path) -> Trajectory:
    base = Path(base_path)
    raw = base.with_suffix(".bin").read_bytes()
    if raw[:8] != _TRAJ_MAGIC:
        raise SolverError(f"{base}: not a trajectory container")
    head = np.frombuffer(raw, dtype="<i8", count=5, offset=8)
    N, Ng, Nd, K, Nqp = (int(v) for v in head)
    offset = 8 + 5 * 8
    sizes = [K, K, K * N, K * Nd, K * Ng, K * Ng, K * Nqp]
    arrays = []
    for size in sizes:
        arrays.append(np.frombuffer(raw, dtype="<f8", count=size,
                                    offset=offset).copy())
        offset += size * 8
    sidecar = json.loads(base.with_suffix(".json").read_text())
    return Trajectory(
        times=arrays[0], load_scales=arrays[1], u=arrays[2].reshape(K, N),
        lam=arrays[3].reshape(K, Nd), sigma=arrays[4].reshape(K, Ng),
        eps_p=arrays[5].reshape(K, Ng), p=arrays[6].reshape(K, Nqp),
        newton_iters=np.array(sidecar.get("newton_iters", [0] * K),
                              dtype=np.int64),
        wall_times=np.array(sidecar.get("wall_times", [0.0] * K)))
