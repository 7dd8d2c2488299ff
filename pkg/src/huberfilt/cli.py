"""Command-line interface.

Subcommands: `mean` (one robust mean estimation), `regress` (one robust
regression), `bench` (grid benchmark to CSV/JSON), `audit` (statistical audit
suite).  Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from ._rng import make_rng
from .data import Dataset
from .datagen import (ContaminationSpec, MEAN_KINDS, REGRESSION_KINDS,
                      gen_mean_instance, gen_regression_instance)
from .errors import HuberfiltError
from .estimator import robust_mean, robust_regression
from .harness import (BenchConfig, audit_certificate, audit_conditional,
                      audit_goodness, bench_suite, rows_to_csv, rows_to_json,
                      thread_count, write_rows)
from .params import AlgorithmParams

PARAM_FIELD_TYPES = {
    "eps": float, "c": float, "k_sketch": int, "t_max": int, "p": int,
    "p_prime": int, "c1": float, "c_stop": float, "kappa_T": float,
    "beta_filter": float, "qt_pairs": int, "hutchinson_probes": int,
    "trim_frac_mult": float, "seed": int,
}


def parse_adversary(text: str) -> ContaminationSpec:
    """kind[:magnitude[:spread_count]] with an optional @direction_seed."""
    seed = 0
    if "@" in text:
        text, seed_txt = text.split("@", 1)
        seed = int(seed_txt)
    parts = text.split(":")
    kind = parts[0]
    magnitude = float(parts[1]) if len(parts) > 1 else 0.0
    spread = int(parts[2]) if len(parts) > 2 else 1
    return ContaminationSpec(kind=kind, magnitude=magnitude,
                             spread_count=spread, direction_seed=seed)


def parse_param_overrides(text: str | None) -> dict:
    if not text:
        return {}
    overrides = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in PARAM_FIELD_TYPES:
            raise ValueError(f"unknown parameter field: {key!r}")
        overrides[key] = PARAM_FIELD_TYPES[key](value.strip())
    return overrides


def read_config_file(path: str) -> dict:
    """Flat `key = value` text config; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="huberfilt",
        description="Robust mean estimation and regression under Huber "
                    "contamination.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=["csv", "json"], default="json")
        p.add_argument("--params", default=None,
                       help="comma-separated k=v overrides of: "
                            + ", ".join(PARAM_FIELD_TYPES))

    p_mean = sub.add_parser("mean", help="one robust mean estimation")
    p_mean.add_argument("--d", type=int, default=64)
    p_mean.add_argument("--n", type=int, default=50_000)
    p_mean.add_argument("--eps", type=float, required=True)
    p_mean.add_argument("--c", type=float, default=0.5)
    p_mean.add_argument("--adversary", default="none",
                        help="kind[:magnitude[:spread]][@dirseed]; kinds: "
                             + ", ".join(MEAN_KINDS))
    p_mean.add_argument("--csv", default=None,
                        help="read points from CSV instead of generating")
    common(p_mean)

    p_reg = sub.add_parser("regress", help="one robust regression")
    p_reg.add_argument("--d", type=int, default=32)
    p_reg.add_argument("--n", type=int, default=200_000)
    p_reg.add_argument("--eps", type=float, required=True)
    p_reg.add_argument("--c", type=float, default=0.5)
    p_reg.add_argument("--sigma", type=float, default=1.0)
    p_reg.add_argument("--beta-norm", type=float, default=None,
                       help="default sigma*eps*ln(1/eps)")
    p_reg.add_argument("--adversary", default="none",
                       help="kinds: " + ", ".join(REGRESSION_KINDS))
    common(p_reg)

    p_bench = sub.add_parser("bench", help="benchmark grid")
    p_bench.add_argument("--config", default=None, help="key = value file")
    p_bench.add_argument("--dims", default="32,128")
    p_bench.add_argument("--epsilons", default="0.05,0.1")
    p_bench.add_argument("--adversaries", default="point_mass:3")
    p_bench.add_argument("--seeds", default="0,1,2")
    p_bench.add_argument("--estimators",
                         default="robust_mean,sample_mean,coord_median")
    p_bench.add_argument("--n-mult", type=float, default=40.0)
    p_bench.add_argument("--n-cap", type=int, default=400_000)
    p_bench.add_argument("--c", type=float, default=0.5)
    p_bench.add_argument("--no-timing", action="store_true",
                         help="zero wall_ms for byte-stable outputs")
    common(p_bench)

    p_audit = sub.add_parser("audit", help="statistical audit suite")
    p_audit.add_argument("--which", choices=["goodness", "conditional",
                                             "certificate", "all"],
                         default="all")
    p_audit.add_argument("--d", type=int, default=64)
    p_audit.add_argument("--n", type=int, default=100_000)
    p_audit.add_argument("--eps", type=float, default=0.05)
    common(p_audit)
    return parser


def _cmd_mean(args) -> int:
    overrides = parse_param_overrides(args.params)
    if args.csv:
        data = Dataset.from_csv(args.csv)
    else:
        spec = parse_adversary(args.adversary)
        rng = make_rng(args.seed, 0)
        data = gen_mean_instance(args.d, args.n, args.eps, np.zeros(args.d),
                                 spec, rng)
    params = AlgorithmParams.for_instance(data.n, data.d, args.eps, c=args.c,
                                          seed=args.seed, **overrides)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = robust_mean(data, args.eps, args.c, params, make_rng(args.seed, 1))
    _emit(_json(rep.to_json_dict()), args.out)
    return 0


def _cmd_regress(args) -> int:
    overrides = parse_param_overrides(args.params)
    spec = parse_adversary(args.adversary)
    beta_norm = args.beta_norm
    if beta_norm is None:
        beta_norm = args.sigma * args.eps * math.log(1.0 / args.eps)
    rng = make_rng(args.seed, 0)
    beta = np.zeros(args.d)
    beta[0] = beta_norm
    inst = gen_regression_instance(args.d, args.n, args.eps, beta, args.sigma,
                                   spec, rng)
    params = AlgorithmParams.for_instance(args.n, args.d,
                                          min(10 * args.eps, 0.5),
                                          c=args.c, seed=args.seed, **overrides)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = robust_regression(inst, args.eps, args.c, params,
                                make_rng(args.seed, 1))
    _emit(_json(rep.to_json_dict()), args.out)
    return 0


def _cmd_bench(args) -> int:
    cfg_kv = read_config_file(args.config) if args.config else {}

    def get(key, fallback):
        return cfg_kv.get(key, fallback)

    dims = [int(v) for v in str(get("dims", args.dims)).split(",")]
    epsilons = [float(v) for v in str(get("epsilons", args.epsilons)).split(",")]
    adv = [parse_adversary(v.strip())
           for v in str(get("adversaries", args.adversaries)).split(",")]
    seeds = [int(v) for v in str(get("seeds", args.seeds)).split(",")]
    estimators = tuple(v.strip()
                       for v in str(get("estimators", args.estimators)).split(","))
    config = BenchConfig(
        dims=dims, epsilons=epsilons, adversaries=adv, seeds=seeds,
        estimators=estimators,
        n_mult=float(get("n_mult", args.n_mult)),
        n_cap=int(get("n_cap", args.n_cap)),
        c=float(get("c", args.c)),
        measure_time=not (args.no_timing
                          or str(get("no_timing", "false")).lower() == "true"),
        param_overrides=parse_param_overrides(
            cfg_kv.get("params", args.params)),
        format=str(get("format", args.format if args.format else "csv")),
    )
    rows = bench_suite(config)
    fmt = "csv" if config.format == "json" and args.format == "csv" else config.format
    out_path = args.out or config.out_path
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    _emit(text, out_path)
    return 0


def _cmd_audit(args) -> int:
    rng = make_rng(args.seed, 0)
    report = {"threads": thread_count()}
    if args.which in ("goodness", "all"):
        data = gen_mean_instance(args.d, args.n, 0.0, np.zeros(args.d),
                                 ContaminationSpec("none"), rng)
        report["goodness"] = audit_goodness(data, alpha=args.eps, k=8,
                                            trials=50, rng=rng)
    if args.which in ("conditional", "all"):
        beta = np.zeros(16)
        beta[0] = 0.1
        sigma = 1.0
        sigma_y = math.sqrt(sigma**2 + float(beta @ beta))
        report["conditional"] = audit_conditional(
            beta, sigma, a=0.5 * sigma_y, half_length=sigma_y / 3.0,
            mc_samples=100_000, rng=rng)
    if args.which in ("certificate", "all"):
        from .data import SubspaceBasis, WeightVector
        data = gen_mean_instance(args.d, min(args.n, 20_000), 0.0,
                                 np.zeros(args.d), ContaminationSpec("none"),
                                 rng)
        report["certificate"] = audit_certificate(
            data, WeightVector.ones(data.n), SubspaceBasis.empty(args.d),
            np.zeros(args.d), args.eps)
    _emit(_json(report), args.out)
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        if args.command == "mean":
            return _cmd_mean(args)
        if args.command == "regress":
            return _cmd_regress(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "audit":
            return _cmd_audit(args)
        return 2
    except HuberfiltError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
