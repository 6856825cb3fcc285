"""Command line entry point: ``tdmcfan <subcommand> --config --seed --out [--jobs]``."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .acceptance import criteria, run_criterion
from .config import ConfigError, ExperimentConfig, _finite
from .experiments import resolve_jobs, run_experiment
from .stats import ks_rejection_rate, two_sample_ks

SUBCOMMAND_KIND = {"fan": "fan-mean", "hitting": "g-identity", "distance": "distance"}


def _parser():
    ap = argparse.ArgumentParser(prog="tdmcfan", description="Ticketed DMC, Brownian fan and first-passage experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in [("run", "run the experiment described by --config"),
                        ("fan", "fan experiment (default kind fan-mean)"),
                        ("hitting", "first-passage experiment (default kind g-identity)"),
                        ("distance", "lp distance between two point-measure CSV files"),
                        ("verify", "run the acceptance suite and write verify.json"),
                        ("calibrate-ks", "null rejection rate and power of the two-sample KS test")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (TDMCFAN_JOBS overrides)")
        if name == "distance":
            p.add_argument("--mu", type=Path, help="CSV with columns x,v,n")
            p.add_argument("--nu", type=Path, help="CSV with columns x,v,n")
            p.add_argument("-p", type=float, default=None, help="exponent in (0, 1]")
            p.add_argument("-a", type=float, default=None, help="barrier slope")
        if name == "verify":
            p.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
        if name == "calibrate-ks":
            p.add_argument("--trials", type=int, default=500)
            p.add_argument("--n", type=int, default=2000)
            p.add_argument("--level", type=float, default=0.01)
    return ap


def _config(args, default_kind):
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
    elif default_kind is not None:
        cfg = ExperimentConfig(kind=default_kind)
    else:
        raise ConfigError("config", "required for this subcommand")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg


def _report(man):
    for m in man.metrics:
        print(m.line())
    print(f"{'PASS' if man.passed else 'FAIL'} {man.config['kind']} -> {man.data_file}")
    return 0 if man.passed else 1


def cmd_verify(args):
    seed = args.seed if args.seed is not None else 20240611
    out = args.out or Path("verify-out")
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for c in criteria(seed=seed, out=str(out)):
        if args.only and c.number not in args.only:
            continue
        metrics, ok = run_criterion(c, jobs=args.jobs, write=True)
        print(f"criterion {c.number:2d}: {'PASS' if ok else 'FAIL'} {c.title}")
        results.append({"criterion": c.number, "title": c.title, "passed": ok,
                        "metrics": [vars(m) for m in metrics]})
    report = {"seed": seed, "passed": all(r["passed"] for r in results), "criteria": results}
    (out / "verify.json").write_text(json.dumps(_finite(report), indent=2) + "\n")
    return 0 if report["passed"] else 1


def cmd_calibrate(args):
    seed = args.seed if args.seed is not None else 0
    gen = np.random.default_rng(seed)
    rate = ks_rejection_rate(args.trials, args.n, args.level, gen)
    _, p_shift = two_sample_ks(gen.random(args.n), 0.2 + gen.random(args.n))
    # binomial 3-sigma band around the nominal level
    band = 3 * (args.level * (1 - args.level) / args.trials) ** 0.5
    report = {"trials": args.trials, "n": args.n, "level": args.level, "null_rejection_rate": rate,
              "band": [args.level - band, args.level + band], "shifted_p_value": p_shift,
              "calibrated": abs(rate - args.level) <= band, "powerful": p_shift < 1e-6}
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "calibrate-ks.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    return 0 if report["calibrated"] and report["powerful"] else 1


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        print("error: jobs: must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "calibrate-ks":
            return cmd_calibrate(args)
        cfg = _config(args, SUBCOMMAND_KIND.get(args.command))
        if args.command == "distance":
            if args.mu and args.nu:
                cfg.options = dict(cfg.options, mu_csv=str(args.mu), nu_csv=str(args.nu))
            if args.p is not None:
                cfg.p = args.p
            if args.a is not None:
                cfg.a = args.a
        cfg.validate()
        return _report(run_experiment(cfg, jobs=resolve_jobs(args.jobs)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
