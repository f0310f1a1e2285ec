"""Command-line entry point.

Subcommands wire config files and the built-in demo systems to the
build/solve/certify/export pipelines.  Exit codes: 0 success, 1
infeasible or validation failure, 2 usage or config error.  All
randomness flows through --seed; timings are logged per phase.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .conic import SolveOptions, export_to
from .dynamics import integrate, save_trajectory
from .poly import StructureError
from .roa import (build_dense, build_sparse, load_certificate,
                  save_certificate, solve_roa)
from .sos import compile as compile_program
from .system import bicylinder, load_config, normalize, vdp_chain
from .validate import (grid_export, mc_volume, residual_sweep, save_report,
                       format_report, soundness_sweep)

SOLUTION_FORMAT = "chainroa-solution/1"

# the knife-edge trio around the bicylinder ROA boundary (one stable
# point and two unstable neighbors), the default trajectory demo
DEMO_INITIAL_POINTS = {
    "bicylinder": [[0.46, 0.25, 0.25], [0.46, 0.26, 0.25], [0.46, 0.25, 0.3]],
}


@dataclass
class RunConfig:
    source: str
    mode: str
    degree: int
    tol: float | None
    seed: int
    samples: int
    out: str
    threads: int
    k: int


def _run_config(parser: argparse.ArgumentParser, args) -> RunConfig:
    degree = getattr(args, "degree", 2)
    if degree < 2 or degree % 2:
        parser.error(f"--degree must be an even integer >= 2, got {degree}")
    source = getattr(args, "config", None) or getattr(args, "demo", None) or ""
    return RunConfig(source=source, mode=getattr(args, "mode", "sparse"),
                     degree=degree, tol=getattr(args, "tol", None),
                     seed=getattr(args, "seed", 0),
                     samples=getattr(args, "samples", 0),
                     out=getattr(args, "out", "."),
                     threads=getattr(args, "threads", 0),
                     k=getattr(args, "k", 10))


def _build_system(parser: argparse.ArgumentParser, args):
    if getattr(args, "config", None):
        if getattr(args, "demo", None):
            parser.error("give either --demo or --config, not both")
        try:
            return load_config(args.config)
        except (OSError, ValueError, KeyError, StructureError) as exc:
            parser.error(f"cannot load system config {args.config!r}: {exc}")
    demo = getattr(args, "demo", None)
    if demo is None:
        parser.error("a system source is required: --demo or --config")
    if demo == "bicylinder":
        return bicylinder()
    return vdp_chain(args.k, args.seed)


def _solve_options(cfg: RunConfig) -> SolveOptions:
    opts = SolveOptions(threads=cfg.threads)
    if cfg.tol is not None:
        opts.tol_feas = cfg.tol
        opts.tol_gap = cfg.tol
    return opts


def _print_timings(timings: dict):
    for phase, dt in timings.items():
        print(f"time [{phase}] {dt:.2f} s")


def cmd_solve(parser, args) -> int:
    sys_ = _build_system(parser, args)
    cfg = _run_config(parser, args)
    res = solve_roa(sys_, cfg.mode, cfg.degree, _solve_options(cfg),
                    require_certificate=False)
    os.makedirs(cfg.out, exist_ok=True)
    export_to(res.problem, "native-json", os.path.join(cfg.out, "problem.json"))
    sol = res.solution
    doc = {
        "format": SOLUTION_FORMAT,
        "mode": cfg.mode,
        "degree": cfg.degree,
        "status": sol.status,
        "objective": sol.objective,
        "max_residual": sol.max_residual,
        "min_eig": sol.min_eig,
        "info": {k: v for k, v in sol.info.items()
                 if isinstance(v, (str, int, float, bool))},
        "timings": res.timings,
    }
    with open(os.path.join(cfg.out, "solution.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(cfg.out, "timings.log"), "w") as fh:
        for phase, dt in res.timings.items():
            fh.write(f"{phase} {dt:.6f}\n")
    _print_timings(res.timings)
    print(f"status {sol.status}")
    if res.certificate is not None:
        save_certificate(res.certificate, os.path.join(cfg.out, "certificate.txt"))
        print(f"objective {sol.objective:.9f}")
        print(f"certificate {os.path.join(cfg.out, 'certificate.txt')}")
        return 0
    detail = sol.info.get("diagnostic", "")
    print(f"no certificate: solver status {sol.status!r}"
          + (f" ({detail})" if detail else ""), file=sys.stderr)
    return 1


def cmd_certify(parser, args) -> int:
    try:
        cert = load_certificate(args.certificate)
    except (OSError, StructureError) as exc:
        parser.error(f"cannot load certificate: {exc}")
    if getattr(args, "demo", None) or getattr(args, "config", None):
        sys_ = _build_system(parser, args)
        if sys_ != cert.system:
            print("certificate was produced for a different system",
                  file=sys.stderr)
            return 2
    sys_ = cert.system
    nsys, _, _ = normalize(sys_)
    build = build_dense if cert.mode == "dense" else build_sparse
    prog = build(nsys, cert.degree)

    rep = soundness_sweep(cert, sys_, args.samples, args.seed, tol=args.tol)
    try:
        rep.residual_minima = residual_sweep(cert, prog, args.samples,
                                             args.seed)
    except StructureError as exc:
        print(f"certificate does not match its program: {exc}", file=sys.stderr)
        return 2
    rep.volume, rep.volume_se = mc_volume(cert, args.samples, args.seed,
                                          tol=args.tol)
    os.makedirs(args.out, exist_ok=True)
    save_report(rep, os.path.join(args.out, "report.json"))
    print(format_report(rep))
    if rep.violations:
        for row in rep.witness_points[:5]:
            print("violation at " + " ".join(repr(float(v)) for v in row),
                  file=sys.stderr)
    return 0 if rep.passed else 1


def _read_points(path: str):
    points = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                points.append([float(v) for v in line.split()])
    return points


def cmd_trajectories(parser, args) -> int:
    sys_ = _build_system(parser, args)
    if args.points:
        try:
            points = _read_points(args.points)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read points file: {exc}")
    elif getattr(args, "demo", None) in DEMO_INITIAL_POINTS:
        points = DEMO_INITIAL_POINTS[args.demo]
    else:
        parser.error("a points file is required for this system")
    os.makedirs(args.out, exist_ok=True)
    manifest = []
    for i, x0 in enumerate(points):
        if len(x0) != sys_.dim:
            manifest.append(f"{i} error wrong dimension ({len(x0)})")
            continue
        if not sys_.state_box.contains(np.asarray(x0, dtype=float)):
            manifest.append(f"{i} error initial state outside the state box")
            continue
        traj = integrate(sys_, x0)
        name = f"traj_{i:03d}.txt"
        save_trajectory(traj, sys_.var_names, os.path.join(args.out, name))
        manifest.append(f"{i} {traj.status} {name}")
    with open(os.path.join(args.out, "trajectories.txt"), "w") as fh:
        for line in manifest:
            fh.write(line + "\n")
    for line in manifest:
        print(line)
    return 0


def cmd_grid(parser, args) -> int:
    try:
        cert = load_certificate(args.certificate)
    except (OSError, StructureError) as exc:
        parser.error(f"cannot load certificate: {exc}")
    names = cert.system.var_names
    if args.axes:
        axes = tuple(a.strip() for a in args.axes.split(",") if a.strip())
        for a in axes:
            if a not in names:
                parser.error(f"unknown axis {a!r}; system variables: "
                             + ",".join(names))
    else:
        axes = names[:min(3, len(names))]
    box = cert.system.state_box
    center = (box.lower + box.upper) / 2.0
    slice_values = {v: float(center[i]) for i, v in enumerate(names)
                    if v not in axes}
    try:
        grid_export(cert, args.res, slice_values, args.out)
    except StructureError as exc:
        parser.error(str(exc))
    print(f"grid {args.out}")
    return 0


def cmd_export_sdp(parser, args) -> int:
    sys_ = _build_system(parser, args)
    cfg = _run_config(parser, args)
    nsys, _, _ = normalize(sys_)
    build = build_dense if cfg.mode == "dense" else build_sparse
    problem = compile_program(build(nsys, cfg.degree))
    export_to(problem, "sdpa-sparse", cfg.out)
    print(f"sdpa {cfg.out} ({problem.m} rows, {len(problem.psd_dims)} blocks,"
          f" max dim {max(problem.psd_dims)})")
    return 0


def cmd_demo_list(parser, args) -> int:
    print("bicylinder  3 scalar blocks, n=3, horizon 100, target [-0.1,0.1]^3")
    print("vdp         Van der Pol chain, n=2K states (--k, couplings from"
          " --seed), horizon 30")
    return 0


def _add_source_flags(sp):
    sp.add_argument("--demo", choices=["bicylinder", "vdp"],
                    help="built-in benchmark system")
    sp.add_argument("--config", help="system config JSON path")
    sp.add_argument("--k", type=int, default=10,
                    help="Van der Pol chain length (with --demo vdp)")
    sp.add_argument("--seed", type=int, default=0,
                    help="seed for couplings and sampling")


def _add_solver_flags(sp):
    sp.add_argument("--mode", choices=["dense", "sparse"], default="sparse")
    sp.add_argument("--degree", type=int, default=8,
                    help="certificate degree (even, >= 2)")
    sp.add_argument("--tol", type=float, default=None,
                    help="solver feasibility/gap tolerance")
    sp.add_argument("--threads", type=int, default=0,
                    help="backend threads (0 = auto)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainroa",
        description="Certified outer approximations of finite-time regions "
                    "of attraction for chain-sparse polynomial ODEs")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="build and solve, write certificate")
    _add_source_flags(sp)
    _add_solver_flags(sp)
    sp.add_argument("--out", default="chainroa-out", help="output directory")

    sp = sub.add_parser("certify", help="validate a certificate empirically")
    sp.add_argument("certificate", help="certificate file from solve")
    _add_source_flags(sp)
    sp.add_argument("--samples", type=int, default=2000)
    sp.add_argument("--tol", type=float, default=1e-6,
                    help="membership margin tolerance")
    sp.add_argument("--out", default="chainroa-out", help="output directory")

    sp = sub.add_parser("trajectories", help="integrate initial conditions")
    sp.add_argument("points", nargs="?", default=None,
                    help="text file, one initial state per line")
    _add_source_flags(sp)
    sp.add_argument("--out", default="chainroa-out", help="output directory")

    sp = sub.add_parser("grid", help="export a membership-margin grid")
    sp.add_argument("certificate", help="certificate file from solve")
    sp.add_argument("--axes", default=None,
                    help="comma-separated free axes (at most 3); other "
                         "variables are pinned to the box center")
    sp.add_argument("--res", type=int, default=41,
                    help="grid resolution per axis")
    sp.add_argument("--out", default="grid.txt", help="output file")

    sp = sub.add_parser("export-sdp", help="compile and export SDPA-sparse")
    _add_source_flags(sp)
    _add_solver_flags(sp)
    sp.add_argument("--out", default="problem.sdpa", help="output file")

    sub.add_parser("demo-list", help="list built-in systems")
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "certify": cmd_certify,
    "trajectories": cmd_trajectories,
    "grid": cmd_grid,
    "export-sdp": cmd_export_sdp,
    "demo-list": cmd_demo_list,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](parser, args)
    except StructureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
