"""Command-line entry point: ``hknoise <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import HKError
from ..metrics import constants
from .config import ExperimentConfig, builtin_config, load_config
from .runner import CSV_COLUMNS, REACH_COLUMNS, csv_text, figures, reach, run, sweep

log = logging.getLogger("hknoise")


def _load(path: str) -> ExperimentConfig:
    # "@name" refers to a checked-in config
    if path.startswith("@"):
        return builtin_config(path[1:])
    return load_config(path)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _cmd_simulate(args) -> int:
    cfg = _load(args.config)
    if args.horizon is not None:
        cfg = cfg.with_(horizon=args.horizon)
    if args.replicates is not None:
        cfg = cfg.with_(replicates=args.replicates)
    res = run(cfg, args.out, workers=args.workers)
    sys.stdout.write(csv_text(res.rows, CSV_COLUMNS))
    for p in res.files:
        log.info("wrote %s", p)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args.config)
    if args.horizon is not None:
        cfg = cfg.with_(horizon=args.horizon)
    seeds = [cfg.seed + k for k in range(args.seeds)]
    variants = args.variants.split(",") if args.variants else None
    rows, agg = sweep(cfg, args.eta, variants, seeds, args.out, workers=args.workers)
    sys.stdout.write(csv_text(agg, ("variant", "eta", "n_rows", "n_failed", "median_dbar_hat", "median_dunder_hat")))
    failed = sum(1 for r in rows if r.get("error"))
    if failed:
        log.warning("%d of %d sweep rows failed", failed, len(rows))
    return 0


def _cmd_reach(args) -> int:
    cfg = _load(args.config)
    report, row = reach(cfg, args.out)
    sys.stdout.write(csv_text([row], REACH_COLUMNS))
    return 0 if report.reached else 3


def _cmd_figures(args) -> int:
    for res in figures(args.which, args.out, args.horizon, args.seed):
        sys.stdout.write(csv_text(res.rows, CSV_COLUMNS))
        for p in res.files:
            log.info("wrote %s", p)
    return 0


def _cmd_constants(args) -> int:
    cfg = _load(args.config)
    pop = cfg.build_population()
    c = constants(float(cfg.noise.eta), float(cfg.alpha), pop)
    out = {"eta": float(cfg.noise.eta), "alpha": float(cfg.alpha), "n": pop.n} | c.as_dict()
    # NaN diagonals are not valid JSON
    text = json.dumps(out, indent=2).replace("NaN", "null")
    sys.stdout.write(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hknoise", description="Noisy heterogeneous HK opinion dynamics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a config and write the summary CSV")
    s.add_argument("config", help="TOML config path, or @name for a built-in one")
    s.add_argument("--out", help="output directory (defaults to the config's)")
    s.add_argument("--horizon", type=int)
    s.add_argument("--replicates", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("sweep", help="scan noise amplitudes, variants and seeds")
    s.add_argument("config")
    s.add_argument("--eta", type=_floats, required=True, help="comma-separated amplitudes")
    s.add_argument("--seeds", type=int, default=1, help="number of master seeds, starting at the config's")
    s.add_argument("--variants", help="comma-separated variants (default: the config's)")
    s.add_argument("--horizon", type=int)
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("reach", help="certify a control law from a task config")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_reach)

    s = sub.add_parser("figures", help="reproduce a figure: 1-5 or example1")
    s.add_argument("which")
    s.add_argument("--out")
    s.add_argument("--horizon", type=int, help="override the 1e6-step default")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=_cmd_figures)

    s = sub.add_parser("constants", help="print the closed-form thresholds for a config")
    s.add_argument("config")
    s.set_defaults(func=_cmd_constants)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (HKError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
