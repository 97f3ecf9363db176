"""fedsched command line: analytic sweeps, Monte Carlo checks, training runs, plots."""

from __future__ import annotations

import argparse
import logging
import math
import sys

from . import experiments, plotting
from .config import ConfigError, ExperimentConfig, from_dict, load_config, validate

log = logging.getLogger("fedsched")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common(p):
    p.add_argument("--config", help="YAML or JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides config)")
    p.add_argument("--threads", type=int, help="worker threads (overrides config)")


def build_parser():
    ap = _Parser(prog="fedsched", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [
        ("rates", "rounds-to-gap sweeps over G and over the SINR threshold"),
        ("tradeoff", "subchannel-count sweep at fixed total rate"),
        ("validate-mc", "analytic success probability against Monte Carlo"),
        ("train", "dual training runs per policy and seed"),
        ("compare-algs", "dual training against local-SGD averaging"),
    ]:
        _common(sub.add_parser(name, help=help_))
    p = sub.add_parser("plot", help="SVG line chart from a result CSV")
    p.add_argument("csv")
    p.add_argument("-o", "--output", help="SVG path (default: next to the CSV)")
    p.add_argument("--x", help="x column")
    p.add_argument("--y", help="y column")
    p.add_argument("--logy", action="store_true", help="log-scale y axis")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.trials is not None:
        cfg.mc.trials = args.trials
    if args.threads is not None:
        cfg.threads = args.threads
    return validate(cfg)


def _report(rows, cols):
    for r in rows:
        print("  ".join(f"{c}={_short(r[c])}" for c in cols))


def _short(x):
    if isinstance(x, float):
        return "non-convergent" if not math.isfinite(x) else f"{x:.4g}"
    return str(x)


def run(args):
    if args.command == "plot":
        path = plotting.plot_csv(args.csv, args.output, args.x, args.y, args.logy)
        print(path)
        return
    cfg = resolve_config(args)
    out = cfg.out
    if args.command == "rates":
        tables = experiments.rates_sweep(cfg, out)
        for stem, rows in tables.items():
            print(f"{stem}: {len(rows)} rows")
    elif args.command == "tradeoff":
        _, best = experiments.tradeoff(cfg, out)
        _report(best, ["policy", "argmin_N", "T_normalized"])
    elif args.command == "validate-mc":
        rows = experiments.validate_mc(cfg, out)
        _report(rows, ["policy", "theta_db", "U_analytic", "U_mc", "rel_dev"])
    elif args.command == "train":
        res = experiments.train(cfg, out)
        if res["bound"]:
            _report(res["bound"], ["policy", "beta_hat", "eps", "T", "mean_gap_at_T", "holds"])
        print(f"{len(res['summary'])} runs written to {out}")
    elif args.command == "compare-algs":
        res = experiments.compare_algs(cfg, out)
        _report(res["summary"], ["algorithm", "policy", "median_rounds", "reached"])
    print(f"results in {out}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"fedsched: error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ConfigError as e:
        print(f"fedsched: config error: {e}", file=sys.stderr)
        return 1
    except plotting.SchemaError as e:
        print(f"fedsched: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"fedsched: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
