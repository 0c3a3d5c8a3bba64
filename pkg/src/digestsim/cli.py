"""Command line entry point: run experiments, tune rates, speed-up studies."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (ConfigError, grid_search_lr, load_config,
                          run_experiment, speedup_study)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="digestsim",
        description="Slotted simulator for decentralized SGD protocols")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", type=Path, help="YAML experiment config")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default: config 'out')")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes (used by 'run')")
        p.add_argument("--seed-base", type=int, default=0,
                       help="offset added to every run seed")

    run_p = sub.add_parser("run", help="seed sweep over the configured algorithms")
    common(run_p)
    grid_p = sub.add_parser("grid", help="learning-rate grid search")
    common(grid_p)
    grid_p.add_argument("--span", type=int, default=None,
                        help="powers of two around each base rate")
    speed_p = sub.add_parser("speedup", help="speed-up-versus-size study")
    common(speed_p)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = args.out if args.out is not None else Path(cfg.out)
        if args.command == "run":
            path = run_experiment(cfg, out, jobs=args.jobs,
                                  seed_base=args.seed_base)
            print(f"wrote {path}/curves.csv, summary.csv and figures/")
        elif args.command == "grid":
            best = grid_search_lr(cfg, span=args.span, out_dir=out,
                                  seed_base=args.seed_base)
            for algo, eta in best.items():
                print(f"{algo}: eta={eta!r}")
            print(f"wrote {out}/grid.csv")
        elif args.command == "speedup":
            if cfg.speedup is None:
                raise ConfigError("speedup: section is required for this command")
            sp = cfg.speedup
            if args.seed_base:
                sp.run_seed += args.seed_base
            rows = speedup_study(sp, out_dir=out)
            for r in rows:
                print(f"V={r['V']:>3} {r['algo']}: "
                      f"speed-up {r['ratio']:.2f} +- {r['stderr']:.2f}")
            print(f"wrote {out}/speedup.csv and figures/")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
