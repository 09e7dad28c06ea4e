"""Command-line interface.

    vegcover simulate --out DIR [--config FILE] [--seed N]
    vegcover fit --config FILE [--j-add N] [--seed N] [--force]
    vegcover predict --config FILE [--artifact DIR] [--truth FILE] [--allow-new-data]
    vegcover curves --config FILE --covariate NAME [--grid lo:hi:n]
    vegcover summarize --config FILE [--artifact DIR]

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from . import pipeline
from .config import RunConfig
from .errors import ConfigError, NumericalError

log = logging.getLogger("vegcover")


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (flat dotted keys)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key; repeatable")
    common.add_argument("--seed", type=int, help="random seed (simulate: scenario seed; fit: chain and J_add selection)")
    common.add_argument("--threads", type=int, help="worker threads for linear algebra and prediction")
    common.add_argument("--deterministic", action="store_true", help="single-threaded, bit-reproducible reductions")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(prog="vegcover", description="Cover-type prediction from reflectance time series.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic data set")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", parents=[common], help="fit the model and write a posterior artifact")
    p.add_argument("--j-add", type=int, help="number of unlabeled sites whose reflectances enter the fit")
    p.add_argument("--force", action="store_true", help="fit even if [X | H] is rank deficient")

    p = sub.add_parser("predict", parents=[common], help="predict cover type at every site")
    p.add_argument("--artifact", help="artifact directory (default: <paths.output>/artifact)")
    p.add_argument("--reflectance", help="reflectance CSV (default: paths.reflectance)")
    p.add_argument("--sites", help="sites CSV (default: paths.sites)")
    p.add_argument("--out", help="predictions CSV (default: <paths.output>/predictions.csv)")
    p.add_argument("--truth", help="site_id,true_label CSV for scoring unlabeled sites")
    p.add_argument("--stride", type=int, help="use every n-th posterior draw")
    p.add_argument("--allow-new-data", action="store_true", help="skip the training-data digest check")

    p = sub.add_parser("curves", parents=[common], help="marginal probability curves for one covariate")
    p.add_argument("--covariate", required=True, help="covariate name or 1-based column index of X")
    p.add_argument("--grid", help="lo:hi:n in original units (default: observed range, 50 points)")
    p.add_argument("--artifact")
    p.add_argument("--out")

    p = sub.add_parser("summarize", parents=[common], help="posterior quantiles of B")
    p.add_argument("--artifact")
    p.add_argument("--out")
    return parser


def _load_config(args) -> RunConfig:
    overrides = _parse_set(args.set)
    if args.deterministic:
        overrides["run.deterministic"] = True
    if args.threads is not None:
        overrides["run.threads"] = args.threads
    if args.seed is not None:
        overrides["simulate.seed" if args.command == "simulate" else "run.seed"] = args.seed
    if getattr(args, "j_add", None) is not None:
        overrides["fit.j_add"] = args.j_add
    if getattr(args, "stride", None) is not None:
        overrides["predict.stride"] = args.stride
    return RunConfig.load(args.config, overrides)


def run(args) -> int:
    cfg = _load_config(args)
    if args.command == "simulate":
        res = pipeline.cmd_simulate(cfg, args.out)
        c = res["counts"]
        print(f"reflectance rows: {c['reflectance_rows']}")
        print(f"sites: {c['sites']}")
        print(f"labeled sites: {c['labeled_sites']}")
        print(f"labeled-site reflectance rows: {c['labeled_reflectance_rows']}")
        print(f"cover-type counts: {' '.join(map(str, c['label_counts']))}")
        print(f"wrote {res['out_dir']}")
    elif args.command == "fit":
        res = pipeline.cmd_fit(cfg, force=args.force or None, threads=args.threads)
        t = res["timings"]
        print(f"J_add: {res['j_add']}  fitting records: {res['n_fit_records']}  draws: {res['n_draws']}")
        print(f"wall clock: {t['total_seconds']:.1f} s (burn-in {t['burnin_seconds']:.1f} s)")
        print(f"minimum ESS over B: {res['min_ess_B']:.1f}")
        print(f"wrote {res['artifact']}")
    elif args.command == "predict":
        res = pipeline.cmd_predict(cfg, artifact=args.artifact, reflectance=args.reflectance, sites=args.sites,
                                   out=args.out, truth=args.truth, allow_new_data=args.allow_new_data,
                                   threads=args.threads)
        print(f"predicted {res['n_sites']} sites with {res['n_draws_used']} draws")
        if "accuracy" in res:
            print(f"accuracy on {res['n_scored']} unlabeled sites: {res['accuracy']:.4f}")
            print(f"median max probability: {res['median_max_prob']:.4f}")
        print(f"wrote {res['predictions']}")
    elif args.command == "curves":
        res = pipeline.cmd_curves(cfg, args.covariate, args.grid, artifact=args.artifact, out=args.out)
        print(f"wrote {res['curves']} ({len(res['frame'])} rows)")
    elif args.command == "summarize":
        res = pipeline.cmd_summarize(cfg, artifact=args.artifact, out=args.out)
        print(res["b_summary"].to_string(index=False))
        print(f"draws: {res['n_draws']}  minimum ESS over B: {res['min_ess_B']:.1f}")
        print(f"wrote {res['path']}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
