"""Offline POD-Greedy training loop.

Each iteration solves the HF problem at the worst parameter, hierarchically
updates both bases, rebuilds the empirical quadrature from all accumulated
stress snapshots, refreshes the error indicator (reusing Riesz elements of
unchanged modes), and sweeps the training set with the online solver.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import ConstraintSet, Discretization, LoadSpec
from .errors import PlastromError
from .hyperreduction import GAPPY_SUPPORT_FACTOR, empirical_quadrature
from .materials import ElastoplasticParams
from .reduction import InnerProduct, ReducedBasis, hpod_update
from .rom import OnlineSolver, build_artifacts
from .solvers import NewtonConfig, SaddleSystem, hf_time_march, kernel_projector

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class GreedyConfig:
    train_values: tuple              # tuple of dicts, e.g. {"nu": .., "a_pui": ..}
    eps_pod_u: float = 1e-5
    eps_pod_sigma: float = 1e-8
    delta: float = 1e-7
    max_iters: int = 5
    stop_tol: float = 0.0            # stop when max indicator drops below
    stagnation_rtol: float = 0.01

    def __post_init__(self):
        if len(self.train_values) == 0:
            raise PlastromError("training set must not be empty")
        for tol in (self.eps_pod_u, self.eps_pod_sigma):
            if not 0.0 < tol < 1.0:
                raise PlastromError("POD tolerances must lie in (0, 1)")
        if self.delta <= 0.0:
            raise PlastromError("delta must be positive")


@dataclass
class GreedyTrace:
    iterations: list = field(default_factory=list)
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "stop_reason": self.stop_reason}


def _param_key(values: dict) -> tuple:
    return tuple(sorted(values.items()))


def indicator_sweep(solver: OnlineSolver, train_values, centroid, times,
                    load_scales, threads: int = 1):
    """Online solve + time-averaged indicator for every training parameter.

    Returns one record per parameter sorted by descending indicator (failed
    solves sink to the bottom and are excluded from the argmax upstream).
    """
    if solver.artifacts.basis_u.n_modes == 0:
        raise PlastromError("cannot sweep with an empty basis")

    def one(i):
        values = train_values[i]
        params = centroid.with_values(**values)
        try:
            sol = solver.solve(params, times, load_scales)
            return {"index": i, "values": dict(values),
                    "indicator": sol.indicator_avg, "wall": sol.wall_time}
        except PlastromError as exc:
            LOG.warning("sweep failed at %s: %s", values, exc)
            return {"index": i, "values": dict(values), "indicator": None,
                    "error": str(exc)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(len(train_values))))
    else:
        records = [one(i) for i in range(len(train_values))]
    records.sort(key=lambda r: (-(r["indicator"]
                                  if r["indicator"] is not None
                                  else -np.inf), r["index"]))
    return records


def pod_greedy(disc: Discretization, cons: ConstraintSet,
               centroid: ElastoplasticParams, load: LoadSpec,
               times, load_scales, config: GreedyConfig,
               newton: NewtonConfig, threads: int = 1, hf_cache=None):
    """POD-Greedy loop; returns (artifacts, trace, hf_cache).

    ``hf_cache`` maps parameter keys to HF trajectories; it is filled as the
    loop samples parameters and may be preloaded to skip HF solves.
    """
    hf_cache = {} if hf_cache is None else hf_cache
    stiffness = disc.assemble_elastic_stiffness(centroid)
    saddle = SaddleSystem(stiffness, cons.matrix)
    purify = kernel_projector(saddle, cons.matrix)
    ip_u = InnerProduct.stiffness(stiffness)
    ip_s = InnerProduct.diagonal(disc.stress_ip_weights)
    basis_u = ReducedBasis.empty(disc.n_dof, ip_u)
    basis_sigma = ReducedBasis.empty(disc.n_stress, ip_s)
    sigma_blocks: list[np.ndarray] = []
    sampled_keys: set = set()
    trace = GreedyTrace()
    indicator_data = None
    artifacts = None

    mu_star = {"nu": centroid.nu, "a_pui": centroid.a_pui}
    delta_max_history: list[float] = []
    for iteration in range(1, config.max_iters + 1):
        record = {"iteration": iteration, "mu_star": dict(mu_star)}
        params_star = centroid.with_values(**mu_star)
        key = _param_key(mu_star)
        tic = time.perf_counter()
        if key not in hf_cache:
            hf_cache[key] = hf_time_march(disc, cons, params_star, load,
                                          times, load_scales, newton)
        traj = hf_cache[key]
        record["hf_seconds"] = time.perf_counter() - tic
        record["hf_wall"] = float(traj.wall_times.sum())

        if key in sampled_keys:
            # argmax landed on an already-sampled parameter: the snapshot
            # set is unchanged, so bases and quadrature stay as they are
            # and only the sweep is repeated (drives the stagnation stop).
            record["resampled"] = True
        else:
            sampled_keys.add(key)
            tic = time.perf_counter()
            basis_u = hpod_update(basis_u, traj.u.T, config.eps_pod_u,
                                  mode_filter=purify)
            sigma_blocks.append(traj.sigma.T)
            basis_sigma = hpod_update(basis_sigma, traj.sigma.T,
                                      config.eps_pod_sigma)
            record["pod_seconds"] = time.perf_counter() - tic

            tic = time.perf_counter()
            # oversample the Gappy mask well beyond the stress modes
            min_support = GAPPY_SUPPORT_FACTOR * basis_sigma.n_modes
            rule_vol, rule_surf, reduced = empirical_quadrature(
                disc, basis_u, np.hstack(sigma_blocks), load, config.delta,
                min_volume_support=min_support)
            record["eq_seconds"] = time.perf_counter() - tic

            tic = time.perf_counter()
            artifacts = build_artifacts(
                disc, cons, stiffness, basis_u, basis_sigma, rule_vol,
                rule_surf, reduced, centroid, load,
                config={"delta": config.delta,
                        "eps_pod_u": config.eps_pod_u,
                        "eps_pod_sigma": config.eps_pod_sigma,
                        "greedy_iteration": iteration},
                saddle=saddle, previous_indicator=indicator_data)
            indicator_data = artifacts.indicator
            record["indicator_seconds"] = time.perf_counter() - tic

        tic = time.perf_counter()
        solver = OnlineSolver(disc, artifacts, newton)
        table = indicator_sweep(solver, config.train_values, centroid, times,
                                load_scales, threads)
        record["sweep_seconds"] = time.perf_counter() - tic
        record["table"] = table
        record["n_modes_u"] = basis_u.n_modes
        record["n_modes_sigma"] = basis_sigma.n_modes
        record["eq_selected_volume"] = artifacts.eq_volume.n_selected
        record["eq_selected_surface"] = artifacts.eq_surface.n_selected

        valid = [r for r in table if r["indicator"] is not None]
        if not valid:
            trace.iterations.append(record)
            trace.stop_reason = "all_sweep_solves_failed"
            break
        best = valid[0]
        record["indicator_max"] = best["indicator"]
        record["argmax_values"] = dict(best["values"])
        trace.iterations.append(record)
        delta_max_history.append(best["indicator"])

        if best["indicator"] < config.stop_tol:
            trace.stop_reason = "indicator_tolerance"
            break
        if len(delta_max_history) >= 3:
            changes = [abs(delta_max_history[-1] - delta_max_history[-2])
                       / delta_max_history[-2],
                       abs(delta_max_history[-2] - delta_max_history[-3])
                       / delta_max_history[-3]]
            if max(changes) < config.stagnation_rtol:
                trace.stop_reason = "indicator_stagnation"
                break
        if iteration == config.max_iters:
            trace.stop_reason = "max_iterations"
            break
        mu_star = dict(best["values"])

    return artifacts, trace, hf_cache
