"""Study orchestration: HF runs, reproduction study, greedy studies, online.

Every study writes RFC-4180 CSV files plus a ``summary.json`` embedding the
configuration hash.  Wall-clock measurements go to the summary and to the
dedicated ``cpu_ratio.csv``; all other CSV content is a deterministic
function of (config, seed).
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import Discretization, build_constraints
from .config import (
    config_hash,
    make_bc,
    make_centroid,
    make_load,
    make_material,
    make_mesh,
    make_newton,
    make_time_grid,
)
from .errors import PlastromError
from .greedy import GreedyConfig, pod_greedy
from .hyperreduction import GAPPY_SUPPORT_FACTOR, empirical_quadrature
from .indicator import build_indicator_data
from .mesh import export_vtk
from .reduction import InnerProduct, pod
from .rom import OnlineSolver, build_artifacts, load_artifacts, save_artifacts
from .solvers import (
    SaddleSystem,
    hf_time_march,
    kernel_projector,
    load_trajectory,
    save_trajectory,
)

LOG = logging.getLogger(__name__)


class StudyContext:
    """Mesh, discretization, constraints and solver settings for one run."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.mesh = make_mesh(cfg)
        self.disc = Discretization(self.mesh)
        self.cons = build_constraints(self.mesh, make_bc(cfg))
        self.load = make_load(cfg)
        self.newton = make_newton(cfg)
        self.centroid = make_centroid(cfg)
        self.material = make_material(cfg)
        self.hash = config_hash(cfg)

    def time_grid(self, n_steps=None):
        return make_time_grid(self.cfg, n_steps)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int)) else f"{v:.17g}"
                             for v in row])


def _write_matrix(path, row_name, row_labels, col_labels, M):
    header = [row_name] + [f"{c:.17g}" if not isinstance(c, (str, int))
                           else str(c) for c in col_labels]
    rows = [[row_labels[i]] + list(M[i]) for i in range(len(row_labels))]
    _write_csv(path, header, rows)


def _summary(outdir: Path, cfg: dict, payload: dict):
    payload = {"config_hash": config_hash(cfg), "version": __version__,
               **payload, "config": cfg}
    (outdir / "summary.json").write_text(json.dumps(payload, indent=2))


def _energy_norms(Kmat, U):
    return np.einsum("ki,ki->k", U, (Kmat @ U.T).T)


def approximation_error(Kmat, u_hf, u_rec):
    """Time-averaged relative error in the centroid energy norm."""
    diff = u_hf - u_rec
    num = _energy_norms(Kmat, diff).sum()
    den = _energy_norms(Kmat, u_hf).sum()
    return float(np.sqrt(num / den)) if den > 0 else 0.0


def run_hf(cfg: dict, outdir: Path) -> dict:
    """Single HF trajectory at the configured material parameters."""
    ctx = StudyContext(cfg)
    times, scales = ctx.time_grid()
    traj = hf_time_march(ctx.disc, ctx.cons, ctx.material, ctx.load, times,
                         scales, ctx.newton)
    save_trajectory(outdir / "trajectory", traj, meta={
        "config_hash": ctx.hash,
        "material": cfg["material"],
    })
    u_last = traj.u[-1].reshape(-1, 3)
    p_cell = traj.p[-1].reshape(ctx.mesh.n_volume, -1).mean(axis=1)
    (outdir / "solution.vtk").write_text(export_vtk(
        ctx.mesh, point_data={"displacement": u_last},
        cell_data={"cumulative_plastic_strain": p_cell}))
    payload = {
        "study": "hf",
        "n_steps": int(traj.n_steps),
        "newton_iters": traj.newton_iters.tolist(),
        "hf_seconds": float(traj.wall_times.sum()),
        "max_displacement": float(np.abs(traj.u[-1]).max()),
        "max_cumulative_plastic_strain": float(traj.p[-1].max()),
    }
    _summary(outdir, cfg, payload)
    return payload


def run_reproduction_study(cfg: dict, outdir: Path) -> dict:
    """Single-parameter study over the (N_u, delta) hyperparameter grid."""
    ctx = StudyContext(cfg)
    K = cfg["reproduce"]["n_steps"]
    times, scales = ctx.time_grid(K)
    tol = cfg["tolerances"]

    traj = hf_time_march(ctx.disc, ctx.cons, ctx.centroid, ctx.load, times,
                         scales, ctx.newton)
    hf_seconds = float(traj.wall_times.sum())

    stiffness = ctx.disc.assemble_elastic_stiffness(ctx.centroid)
    saddle = SaddleSystem(stiffness, ctx.cons.matrix)
    ip_u = InnerProduct.stiffness(stiffness)
    ip_s = InnerProduct.diagonal(ctx.disc.stress_ip_weights)
    purify = kernel_projector(saddle, ctx.cons.matrix)
    basis_u_full = pod(traj.u.T, ip_u, 1e-12, mode_filter=purify)
    basis_sigma = pod(traj.sigma.T, ip_s, 1e-12)

    _write_csv(outdir / "eigenvalues_u.csv", ["mode", "eigenvalue"],
               [(i + 1, v) for i, v in enumerate(basis_u_full.eigenvalues)])
    _write_csv(outdir / "eigenvalues_sigma.csv", ["mode", "eigenvalue"],
               [(i + 1, v) for i, v in enumerate(basis_sigma.eigenvalues)])

    n_values = [n for n in cfg["reproduce"]["n_u_values"]
                if n <= basis_u_full.n_modes]
    deltas = cfg["reproduce"]["delta_values"]

    # theoretical lower bound per N_u: the projection error
    proj = []
    den = _energy_norms(stiffness, traj.u).sum()
    for n in n_values:
        Zn = basis_u_full.modes[:, :n]
        coeff = Zn.T @ (stiffness @ traj.u.T)
        resid = traj.u.T - Zn @ coeff
        proj.append(float(np.sqrt(
            _energy_norms(stiffness, resid.T).sum() / den)))
    _write_csv(outdir / "proj_error_u.csv", ["n_u", "proj_error"],
               list(zip(n_values, proj)))

    indicator_data = build_indicator_data(ctx.disc, ctx.cons, stiffness,
                                          basis_sigma, ctx.load,
                                          saddle=saddle)
    # oversample the Gappy mask well beyond the stress-mode count
    min_support = GAPPY_SUPPORT_FACTOR * basis_sigma.n_modes
    shape = (len(n_values), len(deltas))
    e_app = np.full(shape, np.nan)
    ind = np.full(shape, np.nan)
    sel = np.full(shape, np.nan)
    cpu = np.full(shape, np.nan)
    failures = []

    def run_cell(cell):
        i, j = cell
        n, delta = n_values[i], deltas[j]
        basis_u = basis_u_full.truncate(n)
        try:
            rule_v, rule_s, reduced = empirical_quadrature(
                ctx.disc, basis_u, traj.sigma.T, ctx.load, delta,
                min_volume_support=min_support)
            artifacts = build_artifacts(
                ctx.disc, ctx.cons, stiffness, basis_u, basis_sigma,
                rule_v, rule_s, reduced, ctx.centroid, ctx.load,
                config={"delta": delta, "n_u": n,
                        "eps_pod_sigma": tol["eps_pod_sigma"]},
                saddle=saddle, previous_indicator=indicator_data)
            solver = OnlineSolver(ctx.disc, artifacts, ctx.newton)
            sol = solver.solve(ctx.centroid, times, scales)
            u_rec = sol.alpha_u @ basis_u.modes.T
            e_app[i, j] = approximation_error(stiffness, traj.u, u_rec)
            ind[i, j] = sol.indicator_avg
            sel[i, j] = 100.0 * rule_v.n_selected / ctx.mesh.n_volume
            cpu[i, j] = sol.wall_time / hf_seconds
        except PlastromError as exc:
            failures.append({"n_u": n, "delta": delta, "error": str(exc)})
            LOG.warning("reproduction cell (N_u=%d, delta=%.0e) failed: %s",
                        n, delta, exc)

    cells = [(i, j) for i in range(len(n_values))
             for j in range(len(deltas))]
    threads = cfg["threads"]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_cell, cells))
        failures.sort(key=lambda f: (f["n_u"], f["delta"]))
    else:
        for cell in cells:
            run_cell(cell)
    _write_matrix(outdir / "e_app.csv", "n_u", n_values, deltas, e_app)
    _write_matrix(outdir / "indicator.csv", "n_u", n_values, deltas, ind)
    _write_matrix(outdir / "selected_percent.csv", "n_u", n_values, deltas,
                  sel)
    _write_matrix(outdir / "cpu_ratio.csv", "n_u", n_values, deltas, cpu)
    payload = {
        "study": "reproduce",
        "hf_seconds": hf_seconds,
        "n_u_values": n_values,
        "delta_values": deltas,
        "n_modes_sigma": basis_sigma.n_modes,
        "failures": failures,
    }
    _summary(outdir, cfg, payload)
    return payload


def _train_values(cfg: dict, two_parameter: bool):
    box = cfg["parameter_box"]
    gc = cfg["greedy"]
    n_nu = gc["n_train_nu"]
    nus = np.linspace(box["nu"][0], box["nu"][1], n_nu) if n_nu > 1 \
        else np.array([0.5 * (box["nu"][0] + box["nu"][1])])
    if two_parameter:
        n_a = gc["n_train_a_pui"]
        a_vals = np.linspace(box["a_pui"][0], box["a_pui"][1], n_a) \
            if n_a > 1 else np.array([0.5 * (box["a_pui"][0]
                                             + box["a_pui"][1])])
    else:
        a_vals = np.array([0.5 * (box["a_pui"][0] + box["a_pui"][1])])
    return tuple({"nu": float(nu), "a_pui": float(a)}
                 for a in a_vals for nu in nus)


def run_greedy_study(cfg: dict, outdir: Path, two_parameter=False) -> dict:
    """POD-Greedy training run with trace, tables and saved artifacts."""
    ctx = StudyContext(cfg)
    times, scales = ctx.time_grid()
    gc = cfg["greedy"]
    tol = cfg["tolerances"]
    train = _train_values(cfg, two_parameter)
    greedy_cfg = GreedyConfig(
        train_values=train, eps_pod_u=tol["eps_pod_u"],
        eps_pod_sigma=tol["eps_pod_sigma"], delta=tol["delta"],
        max_iters=gc["max_iters"], stop_tol=gc["stop_tol"],
        stagnation_rtol=gc["stagnation_rtol"])
    artifacts, trace, cache = pod_greedy(
        ctx.disc, ctx.cons, ctx.centroid, ctx.load, times, scales,
        greedy_cfg, ctx.newton, threads=cfg["threads"])

    save_artifacts(outdir / "artifacts", artifacts)
    (outdir / "trace.json").write_text(json.dumps(trace.to_dict(), indent=2))
    (outdir / "reduced_mesh.vtk").write_text(export_vtk(
        ctx.mesh, cell_data={"eq_weight": artifacts.eq_volume.weights},
        title="empirical quadrature weights"))

    rows = []
    for rec in trace.iterations:
        rows.append((rec["iteration"], rec["mu_star"]["nu"],
                     rec["mu_star"]["a_pui"], rec.get("indicator_max",
                                                      float("nan")),
                     rec["n_modes_u"], rec["n_modes_sigma"],
                     rec["eq_selected_volume"], rec["eq_selected_surface"]))
        table_rows = [(r["index"], r["values"]["nu"], r["values"]["a_pui"],
                       r["indicator"] if r["indicator"] is not None
                       else float("nan"))
                      for r in sorted(rec["table"], key=lambda r: r["index"])]
        _write_csv(outdir / f"indicator_iter_{rec['iteration']}.csv",
                   ["index", "nu", "a_pui", "indicator"], table_rows)
    _write_csv(outdir / "max_indicator.csv",
               ["iteration", "nu_star", "a_pui_star", "indicator_max",
                "n_modes_u", "n_modes_sigma", "eq_selected_volume",
                "eq_selected_surface"], rows)

    hf_walls = [rec["hf_wall"] for rec in trace.iterations]
    last = trace.iterations[-1]
    online_walls = [r["wall"] for r in last["table"]
                    if r.get("wall") is not None]
    speedup = (float(np.mean(hf_walls)) / float(np.mean(online_walls))
               if online_walls else float("nan"))

    payload = {
        "study": "greedy2p" if two_parameter else "greedy1p",
        "iterations": len(trace.iterations),
        "stop_reason": trace.stop_reason,
        "n_modes_u": artifacts.basis_u.n_modes,
        "n_modes_sigma": artifacts.basis_sigma.n_modes,
        "selected_volume_percent": 100.0 * artifacts.eq_volume.n_selected
        / ctx.mesh.n_volume,
        "speedup": speedup,
        "max_indicator_series": [rec.get("indicator_max")
                                 for rec in trace.iterations],
    }

    if gc["test_grid"] > 0:
        payload["test_grid"] = _greedy_test_grid(ctx, cfg, artifacts, cache,
                                                 times, scales, outdir)
    _summary(outdir, cfg, payload)
    return payload


def _greedy_test_grid(ctx, cfg, artifacts, cache, times, scales, outdir):
    """HF error vs indicator on an interior Cartesian test grid."""
    n = cfg["greedy"]["test_grid"]
    box = cfg["parameter_box"]
    nus = np.linspace(*box["nu"], n + 2)[1:-1]
    a_vals = np.linspace(*box["a_pui"], n + 2)[1:-1]
    stiffness = ctx.disc.assemble_elastic_stiffness(ctx.centroid)
    solver = OnlineSolver(ctx.disc, artifacts, ctx.newton)
    rows = []
    for a in a_vals:
        for nu in nus:
            params = ctx.centroid.with_values(nu=float(nu), a_pui=float(a))
            traj = hf_time_march(ctx.disc, ctx.cons, params, ctx.load, times,
                                 scales, ctx.newton)
            sol = solver.solve(params, times, scales)
            u_rec = sol.alpha_u @ artifacts.basis_u.modes.T
            err = approximation_error(stiffness, traj.u, u_rec)
            rows.append((float(nu), float(a), sol.indicator_avg, err))
    _write_csv(outdir / "test_grid.csv",
               ["nu", "a_pui", "indicator", "e_app"], rows)
    return rows


def run_online(cfg: dict, outdir: Path) -> dict:
    """Solve stored ROM artifacts for a list of parameters."""
    ctx = StudyContext(cfg)
    oc = cfg["online"]
    if not oc["artifacts"]:
        raise PlastromError("online study requires online.artifacts")
    artifacts = load_artifacts(oc["artifacts"], ctx.disc)
    mu_list = oc["mu"]
    if not mu_list:
        LOG.warning("online study: empty parameter list, nothing to do")
        _summary(outdir, cfg, {"study": "online", "solutions": []})
        return {"study": "online", "solutions": []}
    times, scales = ctx.time_grid()
    solver = OnlineSolver(ctx.disc, artifacts, ctx.newton)
    stiffness = ctx.disc.assemble_elastic_stiffness(ctx.centroid)
    refs = oc["hf_references"]
    results = []
    for i, (nu, a_pui) in enumerate(mu_list):
        params = ctx.centroid.with_values(nu=float(nu), a_pui=float(a_pui))
        sol = solver.solve(params, times, scales)
        name = f"rom_solution_{i:03d}.csv"
        sol.write_csv(outdir / name)
        entry = {"mu": [nu, a_pui], "indicator_avg": sol.indicator_avg,
                 "file": name, "wall": sol.wall_time}
        if i < len(refs) and refs[i]:
            ref = load_trajectory(refs[i])
            u_rec = sol.alpha_u @ artifacts.basis_u.modes.T
            entry["e_app_avg"] = approximation_error(stiffness, ref.u, u_rec)
            coeff = artifacts.basis_u.modes.T @ (stiffness @ ref.u.T)
            resid = ref.u.T - artifacts.basis_u.modes @ coeff
            den = _energy_norms(stiffness, ref.u).sum()
            entry["e_proj_avg"] = float(np.sqrt(
                _energy_norms(stiffness, resid.T).sum() / den))
        results.append(entry)
    _write_csv(outdir / "online_summary.csv",
               ["index", "nu", "a_pui", "indicator_avg"],
               [(i, r["mu"][0], r["mu"][1], r["indicator_avg"])
                for i, r in enumerate(results)])
    payload = {"study": "online", "solutions": results}
    _summary(outdir, cfg, payload)
    return payload


def write_report(study_dir: Path) -> dict:
    """Digest a study output directory into report.json plus stdout lines."""
    study_dir = Path(study_dir)
    summary_path = study_dir / "summary.json"
    if not summary_path.exists():
        raise PlastromError(f"{study_dir}: no summary.json found")
    summary = json.loads(summary_path.read_text())
    lines = [f"study: {summary.get('study')}",
             f"config_hash: {summary.get('config_hash')}"]
    for key in ("hf_seconds", "iterations", "stop_reason", "speedup",
                "selected_volume_percent", "n_modes_u", "n_modes_sigma"):
        if key in summary:
            lines.append(f"{key}: {summary[key]}")
    csvs = sorted(p.name for p in study_dir.glob("*.csv"))
    lines.append("csv outputs: " + ", ".join(csvs))
    report = {"summary": {k: v for k, v in summary.items() if k != "config"},
              "csv_files": csvs}
    (study_dir / "report.json").write_text(json.dumps(report, indent=2))
    return {"lines": lines, "report": report}
