"""Command-line entry point: simulate, run, calibrate, report.

Exit codes: 0 success, 1 configuration error, 2 runtime or filter error.
"""

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import PRESETS, load_config, validate_config
from .dynamics import save_trajectory
from .errors import ConfigError, FdiDseError
from .pipeline import build_truth, calibrate, format_report, report, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _seeds(text):
    """``--seeds 5`` means seeds 0..4; ``--seeds 3,7,11`` lists them."""
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("seed count must be positive")
    return list(range(n))


def build_parser():
    parser = argparse.ArgumentParser(prog="fdidse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--config", type=Path, help="YAML scenario document")
        p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seeds", type=_seeds, help="seed count N or comma-separated list")

    p = sub.add_parser("simulate", help="simulate the truth trajectory only")
    scenario_args(p)
    p = sub.add_parser("run", help="run the full pipeline")
    scenario_args(p)
    p.add_argument("--estimator", choices=("ckf", "rckf", "both"))
    p.add_argument("--attack", help="none, case1, case2, case3 or sigma=<v>; comma-separated for several")
    p.add_argument("--workers", type=int, help="parallel seed workers")
    p.add_argument("--no-plots", action="store_true", help="skip SVG panels")
    p = sub.add_parser("calibrate", help="derive prior thresholds C from a no-attack run")
    scenario_args(p)
    p = sub.add_parser("report", help="re-aggregate an existing run directory")
    p.add_argument("run_dir", type=Path)
    return parser


def raw_document(args):
    """Merge the config file with command-line overrides into one raw document."""
    raw = load_config(args.config) if getattr(args, "config", None) else {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    if args.preset:
        raw["preset"] = args.preset
    if args.out:
        raw["output"] = str(args.out)
    if args.seeds:
        raw["seeds"] = args.seeds
    if getattr(args, "estimator", None):
        raw["estimators"] = ["ckf", "rckf"] if args.estimator == "both" else [args.estimator]
    if getattr(args, "attack", None):
        raw.setdefault("attack", {})
        raw["attack"]["cases"] = [c.strip() for c in args.attack.split(",") if c.strip()]
    if getattr(args, "workers", None):
        raw["workers"] = args.workers
    if getattr(args, "no_plots", False):
        raw["plots"] = False
    return raw


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            rep = report(args.run_dir)
            print(format_report(rep, sorted({s for s in rep.per_seed})), end="")
            return EXIT_OK
        cfg = validate_config(raw_document(args))
        if args.command == "simulate":
            cfg.output.mkdir(parents=True, exist_ok=True)
            truth = build_truth(cfg)
            save_trajectory(truth, cfg.output / "truth.csv")
            print(f"wrote {cfg.output / 'truth.csv'} ({len(truth)} samples)")
        elif args.command == "calibrate":
            C = calibrate(cfg, cfg.output)
            print("C = " + ", ".join(f"{c:.6f}" for c in C))
        else:
            rep = run_scenario(cfg)
            print(format_report(rep, cfg.seeds), end="")
            print(f"outputs in {cfg.output}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FdiDseError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
