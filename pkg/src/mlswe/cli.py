"""Command line interface.

Subcommands:

    mlswe mesh     generate, validate, and save meshes
    mlswe run      integrate a configured problem
    mlswe converge time-convergence study against an RK4 reference
    mlswe stats    mean flow / SSH RMS over a snapshot directory
    mlswe courant  reference time step and Courant number of a mesh

Config files are YAML mappings mirroring the run configuration (see the
README for the schema); all physical quantities are SI.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlswe")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate / validate / save meshes")
    p_mesh.add_argument("--planar", nargs=3, metavar=("NX", "NY", "DC"),
                        help="periodic hex mesh: nx ny dc[m]")
    p_mesh.add_argument("--sphere", nargs=3,
                        metavar=("LEVEL", "LLOYD", "RADIUS"),
                        help="icosahedral sphere: level lloyd_iters radius[m]")
    p_mesh.add_argument("--validate", metavar="PATH",
                        help="load and validate an existing mesh file")
    p_mesh.add_argument("--out", metavar="PATH",
                        help="output file (.npz binary or .txt text)")

    p_run = sub.add_parser("run", help="integrate a configured problem")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--deterministic", action="store_true",
                       help="pin the RNG seed for bitwise reproducibility")
    p_run.add_argument("--resume", metavar="SNAPSHOT",
                       help="continue from a snapshot file")

    p_conv = sub.add_parser("converge", help="time-convergence study")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--dt-list", required=True,
                        help="comma-separated step sizes in seconds")
    p_conv.add_argument("--ref-dt", type=float, required=True)
    p_conv.add_argument("--out", help="optional CSV output path")

    p_stats = sub.add_parser("stats", help="statistics over snapshots")
    p_stats.add_argument("--snapshots", required=True, metavar="DIR")
    p_stats.add_argument("--out", help="optional npz output for the fields")

    p_cour = sub.add_parser("courant", help="reference time step of a mesh")
    p_cour.add_argument("--mesh", required=True, metavar="PATH")
    p_cour.add_argument("--depth", type=float, default=1000.0,
                        help="flat-bottom depth [m] (default 1000)")
    p_cour.add_argument("--dt", type=float, help="report C(dt) for this dt")

    args = parser.parse_args(argv)
    return {"mesh": _cmd_mesh, "run": _cmd_run, "converge": _cmd_converge,
            "stats": _cmd_stats, "courant": _cmd_courant}[args.command](args)


def _cmd_mesh(args) -> int:
    from mlswe.mesh import (build_planar_hex_mesh, build_spherical_mesh,
                            load_mesh, save_mesh, validate_mesh)

    if args.validate:
        mesh = load_mesh(args.validate)
        validate_mesh(mesh)
        print(f"{args.validate}: valid ({mesh.geometry}, "
              f"{mesh.n_cells} cells, {mesh.n_edges} edges, "
              f"{mesh.n_vertices} vertices)")
        return 0
    if args.planar:
        nx, ny, dc = int(args.planar[0]), int(args.planar[1]), float(args.planar[2])
        mesh = build_planar_hex_mesh(nx, ny, dc)
    elif args.sphere:
        mesh = build_spherical_mesh(int(args.sphere[0]), int(args.sphere[1]),
                                    float(args.sphere[2]))
    else:
        print("mesh: need --planar, --sphere, or --validate", file=sys.stderr)
        return 1
    validate_mesh(mesh)
    print(f"built {mesh.geometry} mesh: {mesh.n_cells} cells, "
          f"{mesh.n_edges} edges, {mesh.n_vertices} vertices")
    if args.out:
        save_mesh(mesh, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_run(args) -> int:
    from mlswe import harness

    config = harness.load_config(args.config)
    if args.deterministic:
        config["deterministic"] = True
    np.random.seed(int(config.get("seed", 0)))
    result = harness.run(config, out_dir=args.out, resume_from=args.resume)
    last = result.rows[-1]
    print(f"scheme={result.scheme} dt={result.dt:g}s steps={result.steps_done} "
          f"energy={last['energy']:.6e} mass={last['total_mass']:.6e}")
    if result.status != "ok":
        print(f"ABORTED: {result.reason}", file=sys.stderr)
        return 2
    print(f"diagnostics: {os.path.join(args.out, 'diagnostics.csv')}")
    return 0


def _cmd_converge(args) -> int:
    from mlswe import harness

    config = harness.load_config(args.config)
    problem = harness.build_problem(config)
    dt_list = [float(s) for s in args.dt_list.split(",")]

    def make_advance(dt):
        cfg_dt = dict(config)
        cfg_dt["time"] = dict(config.get("time", {}), dt=dt,
                              horizon=max(dt, float(config["time"]["horizon"])))
        advance, _, _ = harness.make_stepper(problem, cfg_dt)
        return advance

    horizon = float(config["time"]["horizon"])
    rows = harness.convergence_study(problem, make_advance, dt_list,
                                     horizon, args.ref_dt)
    print(f"{'dt':>12} {'C(dt)':>10} {'MH rel err':>12}")
    lines = ["dt,courant,error"]
    for r in rows:
        print(f"{r['dt']:12.4f} {r['courant']:10.3f} {r['error']:12.4e}")
        lines.append(f"{r['dt']!r},{r['courant']!r},{r['error']!r}")
    if args.out:
        with open(args.out, "w") as f:
            f.write("\n".join(lines) + "\n")
    return 0


def _cmd_stats(args) -> int:
    from mlswe import harness

    files = harness.snapshot_files(args.snapshots)
    if not files:
        print(f"no snapshots found in {args.snapshots}", file=sys.stderr)
        return 1
    # fields-only statistics; mesh/config-dependent norms live in the API
    states = [harness.load_snapshot(f)[0] for f in files]
    u = np.stack([s.u for s in states])
    h = np.stack([s.h for s in states])
    ssh_anom = h.sum(axis=1)  # bathymetry-free part; constant b drops in RMS
    mean_ssh = ssh_anom.mean(axis=0)
    ssh_rms = np.sqrt(((ssh_anom - mean_ssh) ** 2).mean(axis=0))
    summary = {
        "n_snapshots": len(files),
        "mean_speed_max": float(np.abs(u.mean(axis=0)).max()),
        "ssh_rms_max": float(ssh_rms.max()),
        "ssh_rms_mean": float(ssh_rms.mean()),
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        np.savez(args.out, mean_u=u.mean(axis=0), ssh_rms=ssh_rms,
                 mean_ssh=mean_ssh)
        print(f"wrote {args.out}")
    return 0


def _cmd_courant(args) -> int:
    from mlswe import harness
    from mlswe.mesh import load_mesh
    from mlswe.mesh.masks import apply_dry_mask
    from mlswe.state import ModelConfig
    from mlswe import scenarios

    mesh = load_mesh(args.mesh)
    b = np.full(mesh.n_cells, -abs(args.depth))
    cfg = ModelConfig(g=9.81, rho=np.array([1025.0]),
                      f_vertex=scenarios.coriolis_field(mesh),
                      bathymetry=b, eta0=np.array([0.0]))
    masks = apply_dry_mask(mesh, b, cfg.eta0)
    rep = harness.courant_report(mesh, cfg, masks, dt=args.dt)
    print(json.dumps(rep, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
