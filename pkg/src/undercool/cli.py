"""Command-line interface.

Subcommands:
  run       integrate one configured simulation and write artifacts
  sweep     timestep sweep with/without preconditioning (cost metrics CSV)
  converge  temporal-convergence study against a fine-dt reference
  verify    run the acceptance suite and print one line per criterion

Exit codes: 0 success, 1 verification failure, 2 config error,
3 solver failure, 4 instability detected.
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig, default_config, load_config, parse_overrides
from .errors import ConfigError

__all__ = ["main", "entry"]


def _load(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = default_config(args.model) if getattr(args, "model", None) else RunConfig()
    if getattr(args, "model", None):
        cfg.model = args.model
    if args.set:
        parse_overrides(cfg, args.set)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.output.directory = args.out
    cfg.validate()
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a key = value configuration file")
    p.add_argument("--model", choices=["free_growth", "alloy"],
                   help="select the physics model (with its benchmark defaults)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a configuration value (repeatable)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed for initial perturbations")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="undercool",
        description="Implicit finite-element phase-field solver for "
                    "dendritic solidification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one simulation")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="timestep sweep of solver cost")
    _add_common(p_sweep)
    p_sweep.add_argument("--dts", required=True,
                         help="comma-separated timestep sizes")
    p_sweep.add_argument("--t-final", type=float, default=None,
                         help="fixed integration time for every sweep member")
    p_sweep.add_argument("--precond", choices=["on", "off", "both"], default="both")

    p_conv = sub.add_parser("converge", help="temporal convergence study")
    _add_common(p_conv)
    p_conv.add_argument("--dts", required=True,
                        help="comma-separated timestep sizes")
    p_conv.add_argument("--t-end", type=float, required=True,
                        help="comparison time (every dt must divide it)")
    p_conv.add_argument("--ref-dt", type=float, default=None,
                        help="reference timestep (default: smallest dt / 8)")

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--criteria", default="",
                       help="comma-separated criterion numbers (default: all)")
    p_ver.add_argument("--out", default="verify_out",
                       help="working directory for verification artifacts")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            from .driver import run

            cfg = _load(args)
            code, _ = run(cfg)
            return code

        if args.command == "sweep":
            import os

            from .diagnostics import scalability_sweep, write_sweep_csv

            cfg = _load(args)
            dts = [float(x) for x in args.dts.split(",") if x]
            modes = ("on", "off") if args.precond == "both" else (args.precond,)
            rows = scalability_sweep(cfg, dts, precond_modes=modes,
                                     t_final=args.t_final)
            os.makedirs(cfg.output.directory, exist_ok=True)
            path = os.path.join(cfg.output.directory, "sweep.csv")
            write_sweep_csv(rows, path)
            for r in rows:
                print(
                    f"dt={r['dt']:.6g} kappa={r['kappa']:.4g} precond={r['precond']} "
                    f"status={r['status']} gmres/step={r['avg_gmres_per_step']:.3g} "
                    f"cpu={r['cpu_seconds']:.3g}s"
                )
            print(f"wrote {path}")
            return 0 if all(r["status"] == "ok" for r in rows) else 3

        if args.command == "converge":
            import os

            from .diagnostics import convergence_study

            cfg = _load(args)
            dts = [float(x) for x in args.dts.split(",") if x]
            study = convergence_study(cfg, dts, args.t_end, ref_dt=args.ref_dt)
            os.makedirs(cfg.output.directory, exist_ok=True)
            path = os.path.join(cfg.output.directory, "convergence.csv")
            with open(path, "w") as fh:
                fh.write("dt,error\n")
                for d, e in zip(study.dts, study.errors):
                    fh.write(f"{repr(d)},{repr(e)}\n")
            for d, e in zip(study.dts, study.errors):
                print(f"dt={d:.6g} error={e:.6e}")
            print(f"fitted order: {study.order:.3f}")
            print(f"wrote {path}")
            return 0

        if args.command == "verify":
            from .acceptance import run_acceptance

            wanted = [int(x) for x in args.criteria.split(",") if x]
            ok = run_acceptance(args.out, criteria=wanted or None, verbose=True)
            return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
