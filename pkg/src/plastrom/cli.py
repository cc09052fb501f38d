"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigError, PlastromError
from .mesh import export_msh, export_vtk, generate_plate_with_hole, import_msh
from .studies import (
    run_greedy_study,
    run_hf,
    run_online,
    run_reproduction_study,
    write_report,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plastrom",
        description="Hyper-reduced ROMs for parametric quasi-static "
                    "elastoplasticity")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh generation and import")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = mesh_sub.add_parser("gen", help="generate the plate-with-hole mesh")
    gen.add_argument("--lx", type=float, default=10.0)
    gen.add_argument("--ly", type=float, default=10.0)
    gen.add_argument("--lz", type=float, default=1.0)
    gen.add_argument("--radius", type=float, default=2.0)
    gen.add_argument("--resolution", type=int, default=2)
    gen.add_argument("--order", type=int, choices=(1, 2), default=1)
    gen.add_argument("-o", "--output", required=True,
                     help="output MSH 2.2 path")
    gen.add_argument("--vtk", default="", help="optional VTK export path")
    imp = mesh_sub.add_parser("import", help="validate and inspect a mesh")
    imp.add_argument("path")
    imp.add_argument("--vtk", default="", help="optional VTK export path")

    hf = sub.add_parser("hf", help="high-fidelity solves")
    hf_sub = hf.add_subparsers(dest="hf_command", required=True)
    hf_run = hf_sub.add_parser("run", help="time march one parameter set")
    hf_run.add_argument("-c", "--config", required=True)

    for name, help_text in (
            ("reproduce", "solution reproduction study over (N_u, delta)"),
            ("greedy", "POD-Greedy training study"),
            ("online", "online solves from stored artifacts")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True)

    rep = sub.add_parser("report", help="summarize a study directory")
    rep.add_argument("--study", required=True, help="study output directory")
    return parser


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PlastromError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.command == "mesh":
        if args.mesh_command == "gen":
            mesh = generate_plate_with_hole(args.lx, args.ly, args.lz,
                                            args.radius, args.resolution,
                                            args.order)
            Path(args.output).write_text(export_msh(mesh))
            if args.vtk:
                Path(args.vtk).write_text(export_vtk(mesh))
            print(f"wrote {args.output}: {mesh.n_nodes} nodes, "
                  f"{mesh.n_volume} volume elements, "
                  f"{mesh.n_surface} surface elements, "
                  f"volume {mesh.volume():.6g}")
            return 0
        mesh = import_msh(Path(args.path).read_text())
        if args.vtk:
            Path(args.vtk).write_text(export_vtk(mesh))
        info = {
            "nodes": mesh.n_nodes,
            "volume_elements": mesh.n_volume,
            "volume_kind": mesh.volume_kind,
            "surface_elements": mesh.n_surface,
            "quadrature_points": mesh.n_qp,
            "volume": mesh.volume(),
            "node_groups": {k: int(v.size)
                            for k, v in sorted(mesh.node_groups.items())},
        }
        print(json.dumps(info, indent=2))
        return 0

    if args.command == "report":
        result = write_report(Path(args.study))
        print("\n".join(result["lines"]))
        return 0

    cfg = load_config(Path(args.config))
    np.random.seed(cfg["seed"])
    outdir = _outdir(cfg)
    if args.command == "hf":
        run_hf(cfg, outdir)
    elif args.command == "reproduce":
        run_reproduction_study(cfg, outdir)
    elif args.command == "greedy":
        two = cfg["study"] == "greedy2p"
        run_greedy_study(cfg, outdir, two_parameter=two)
    elif args.command == "online":
        run_online(cfg, outdir)
    print(f"outputs written to {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
