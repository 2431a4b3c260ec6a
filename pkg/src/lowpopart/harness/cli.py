"""Command-line entry point.

Exit codes: 0 success, 1 domain or file error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..design import Criterion, DesignOptions, load_arm_set, optimize_design, save_design
from ..errors import LowRankError
from .config import PROFILES, load_config, profile
from .experiments import run_bandit, run_recover
from .lbcheck import format_table, lbcheck
from .plot import emit_plot

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--reps", type=int, default=None, help="repetitions per grid point")
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--full", action="store_true", help="use full-scale profile settings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowpopart", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="optimize a design over an arm-set CSV")
    p.add_argument("arms", help="arm-set CSV (first line d1,d2; one vec-order row per arm)")
    p.add_argument("--criterion", choices=["bmin", "emin"], default="bmin")
    p.add_argument("--max-iters", type=int, default=2000)
    _common(p)

    for name, helptext in (("recover", "recovery-error experiment"), ("bandit", "regret experiment")):
        p = sub.add_parser(name, help=helptext)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="flat key = value experiment file")
        src.add_argument("--profile", choices=PROFILES)
        p.add_argument("--quiet", action="store_true")
        _common(p)

    p = sub.add_parser("lbcheck", help="verify the lower-bound instance identities")
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--r-max", type=float, default=6.0)
    p.add_argument("--C", type=float, default=None, help="sign-arm scale (default 1/(10d))")
    p.add_argument("--h-count", type=int, default=2000)
    p.add_argument("--s-count", type=int, default=200)
    p.add_argument("--corrupt", action="store_true", help="flip the sign of eps (negative control)")
    _common(p)

    p = sub.add_parser("plot", help="render an aggregate CSV as SVG")
    p.add_argument("csv", help="aggregate CSV from recover or bandit")
    p.add_argument("--title", default="")
    _common(p)
    return parser


def _cmd_design(args) -> int:
    arm_set = load_arm_set(args.arms)
    opts = DesignOptions(max_iters=args.max_iters, seed=args.seed or 0)
    design = optimize_design(arm_set, Criterion.parse(args.criterion), opts)
    out = Path(args.out or "design.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_design(design, out)
    report = {"criterion": design.criterion_kind.name, "value": design.criterion_value,
              "iterations": design.iterations, "converged": design.converged, "arms": len(arm_set)}
    out.with_suffix(".json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"criterion={report['criterion']} value={design.criterion_value:.10g} "
          f"iterations={design.iterations} converged={design.converged}")
    return EXIT_OK


def _load_spec(args):
    spec = load_config(args.config) if args.config else profile(args.profile, full=args.full)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["reps"] = args.reps
    if args.out is not None:
        changes["out"] = args.out
    return replace(spec, **changes)


def _cmd_experiment(args) -> int:
    spec = _load_spec(args)
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    out = Path(spec.out)
    if args.command == "recover":
        result = run_recover(spec, out, progress)
        for x, m, mu, sd in sorted(result.rows()):
            print(f"n0={x} {m}: mean={mu:.6g} std={sd:.6g}")
    else:
        result = run_bandit(spec, out, progress)
        for label in result.curves:
            fin = result.final(label)
            print(f"T={result.T} {label}: mean_final_regret={fin.mean():.6g}")
    print(f"wrote {out / 'aggregate.csv'}")
    return EXIT_OK


def _cmd_lbcheck(args) -> int:
    _, rows = lbcheck(d=args.d, r=args.r, eps=args.eps, r_max=args.r_max, C=args.C, h_count=args.h_count,
                      s_count=args.s_count, seed=args.seed or 0, corrupt=args.corrupt)
    print(format_table(rows))
    failed = [r[0] for r in rows if not r[3]]
    if failed:
        print("failed: " + "; ".join(failed), file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def _cmd_plot(args) -> int:
    out = Path(args.out or Path(args.csv).with_suffix(".svg"))
    emit_plot(args.csv, out, args.title)
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {"design": _cmd_design, "recover": _cmd_experiment, "bandit": _cmd_experiment,
            "lbcheck": _cmd_lbcheck, "plot": _cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (LowRankError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
