"""Command-line entry points.

Subcommands:
  run      execute an experiment config (coupling-time, cftp-sample,
           stationary-series or exact-oracle mode)
  oracle   exact checks on a small cycle without writing a config
  fit-gev  GEV maximum-likelihood fit of standardized coupling times
           read from a JSONL sample stream
  autocorr scaled-autocorrelation collapse experiment
  coupon   coupon-collector sampling sanity check
  report   recompute summaries from JSONL streams; optional CSV table

Exit codes: 0 success, 2 invalid config/arguments, 3 step-cap exhaustion
above the configured threshold (partial results are kept).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import stats
from .coupon import coupon_moments, coupon_time, gumbel_cdf
from .experiments import (CapExhaustionError, ConfigError, ExperimentConfig,
                          read_records, recompute_summary, run_experiment,
                          scaled_autocorr_experiment)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAP = 3


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    summary = run_experiment(cfg)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.config:
        cfg = _load_config(args)
    else:
        if args.L is None or args.p is None or args.q is None:
            raise ConfigError("oracle needs --config or all of --L --p --q")
        cfg = ExperimentConfig.from_dict({
            "model": "fk",
            "graph": {"kind": "torus", "d": 1, "L": args.L},
            "params": {"p": args.p, "q": args.q},
            "mode": "exact-oracle",
            "seed": args.seed if args.seed is not None else 0,
            "n_samples": 1,
            "out": args.out,
        })
    cfg.mode = "exact-oracle"
    if cfg.out is None:
        cfg.out = "oracle"
    summary = run_experiment(cfg)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK if summary["all_passed"] else 1


def _cmd_fit_gev(args) -> int:
    records = read_records(args.infile)
    t_vals = np.array([r["T"] for r in records if "T" in r], dtype=np.float64)
    if t_vals.size < 100:
        raise ConfigError(f"need at least 100 T records, found {t_vals.size}")
    mom = stats.estimate_moments(t_vals, bootstrap_reps=args.bootstrap,
                                 seed=args.seed)
    s_vals = stats.standardize(t_vals, mom)
    fitted = stats.fit_gev(s_vals, bootstrap_reps=args.bootstrap,
                           seed=args.seed)
    out = {"n_samples": int(t_vals.size), "moments": mom.as_dict(),
           "gev": fitted.as_dict(),
           "ks_gumbel": stats.ks_distance(s_vals, gumbel_cdf)}
    text = json.dumps(out, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_autocorr(args) -> int:
    cfg = _load_config(args)
    summary = scaled_autocorr_experiment(cfg)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_coupon(args) -> int:
    samples = np.array([coupon_time(args.m, args.seed, replica=r)
                        for r in range(args.n)], dtype=np.float64)
    exact = coupon_moments(args.m)
    mom = stats.estimate_moments(samples, seed=args.seed)
    s_vals = stats.standardize(samples, (exact.mean, exact.std))
    out = {"m": args.m, "n_samples": args.n,
           "exact": {"mean": exact.mean, "std": exact.std},
           "sample": mom.as_dict(),
           "ks_gumbel": stats.ks_distance(s_vals, gumbel_cdf)}
    text = json.dumps(out, sort_keys=True, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_report(args) -> int:
    summaries = []
    for path in args.infile:
        records = read_records(path)
        if args.config:
            cfg = ExperimentConfig.from_file(args.config)
        else:
            sidecar = path[:-len(".jsonl")] + ".summary.json" \
                if path.endswith(".jsonl") else path + ".summary.json"
            try:
                with open(sidecar) as f:
                    cfg = ExperimentConfig.from_dict(json.load(f)["config"])
            except FileNotFoundError as exc:
                raise ConfigError(
                    f"no sidecar summary next to {path}; pass --config") from exc
        summaries.append(recompute_summary(cfg, records))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(summaries if len(summaries) > 1 else summaries[0], f,
                      sort_keys=True, indent=2)
            f.write("\n")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write("L,mean_ratio,se_mean_ratio,std_ratio,se_std_ratio\n")
            for s in summaries:
                L = s["config"]["graph"].get("L", "")
                r = s.get("ratios")
                if r is None:
                    continue
                f.write(f"{L},{r['mean_T_over_coupon']!r},"
                        f"{r['se_mean_T_over_coupon']!r},"
                        f"{r['std_T_over_coupon']!r},"
                        f"{r['se_std_T_over_coupon']!r}\n")
    print(json.dumps(summaries if len(summaries) > 1 else summaries[0],
                     sort_keys=True, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cftpsim",
        description="Coupling-from-the-past simulation and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out")
    p_run.set_defaults(func=_cmd_run)

    p_or = sub.add_parser("oracle", help="exact checks on a small system")
    p_or.add_argument("--config")
    p_or.add_argument("--L", type=int)
    p_or.add_argument("--p", type=float)
    p_or.add_argument("--q", type=float)
    p_or.add_argument("--seed", type=int)
    p_or.add_argument("--threads", type=int)
    p_or.add_argument("--out")
    p_or.set_defaults(func=_cmd_oracle)

    p_gev = sub.add_parser("fit-gev", help="GEV fit of standardized T")
    p_gev.add_argument("--in", dest="infile", required=True)
    p_gev.add_argument("--bootstrap", type=int, default=200)
    p_gev.add_argument("--seed", type=int, default=0)
    p_gev.add_argument("--out")
    p_gev.set_defaults(func=_cmd_fit_gev)

    p_ac = sub.add_parser("autocorr", help="scaled-autocorrelation collapse")
    p_ac.add_argument("--config", required=True)
    p_ac.add_argument("--seed", type=int)
    p_ac.add_argument("--threads", type=int)
    p_ac.add_argument("--out")
    p_ac.set_defaults(func=_cmd_autocorr)

    p_cp = sub.add_parser("coupon", help="coupon-collector sampling check")
    p_cp.add_argument("-m", type=int, required=True)
    p_cp.add_argument("-n", type=int, default=10000)
    p_cp.add_argument("--seed", type=int, default=0)
    p_cp.add_argument("--out")
    p_cp.set_defaults(func=_cmd_coupon)

    p_rep = sub.add_parser("report", help="recompute summaries from JSONL")
    p_rep.add_argument("--in", dest="infile", nargs="+", required=True)
    p_rep.add_argument("--config")
    p_rep.add_argument("--out")
    p_rep.add_argument("--csv")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapExhaustionError as exc:
        print(f"step-cap exhaustion: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
