"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import arc_strengths, averaged_network, estimate_threshold
from .data_io import (load_dataset, load_genotypes, load_traits, parse_tiers, write_genotypes,
                      write_table)
from .errors import BnError, ConfigError, DataError
from .gblup import build_gblup, verify_equivalence
from .graph import Node
from .inference import ENGINES, Evidence, predict, query
from .modelfile import ModelFile, to_dot
from .params import fit, parse_lambda_policy
from .pipeline import CvConfig, learn_bn, run_cv
from .simulate import SimSpec, TraitSpec, simulate
from .structure import SearchConfig

log = logging.getLogger("multitrait_bn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads for parallel sections (default: all cores)")
    g.add_argument("--precision", type=int, default=argparse.SUPPRESS,
                   help="significant digits in numeric output (default 6)")
    g.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    return p


def _data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--genotypes", required=required, help="genotype CSV (id,<snp>...)")
    p.add_argument("--traits", required=required, help="trait CSV (id,<trait>...)")
    p.add_argument("--tiers", help="trait=tier,... or a two-column CSV (default: all tier 0)")
    p.add_argument("--impute-mean", action="store_true",
                   help="fill missing values with column means instead of failing")


def _learn_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.01, help="CI-test level (default 0.01)")
    p.add_argument("--max-cond", type=int, default=3, help="largest conditioning set (default 3)")
    p.add_argument("--restarts", type=int, default=0, help="hill-climbing random restarts")
    p.add_argument("--perturb", type=int, default=5, help="random moves per restart")
    _fit_args(p)
    p.add_argument("--min-maf", type=float, default=0.01)
    p.add_argument("--r-max", type=float, default=0.95, help="pairwise |r| pruning cut-off")


def _fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fit", choices=("ols", "ridge"), default="ridge")
    p.add_argument("--lambda", dest="lambda_policy", default="gcv",
                   help="ridge penalty: gcv, kfold[(k,seed)], fixed(x) or a number")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="multitrait-bn", parents=[common],
                     description="Multi-trait Gaussian Bayesian networks for genomic data.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("learn", parents=[common], help="learn and fit a network")
    _data_args(p)
    _learn_args(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--dot", help="also write a DOT rendering here")

    p = sub.add_parser("predict", parents=[common], help="predict traits for new individuals")
    p.add_argument("--model", required=True)
    p.add_argument("--genotypes", required=True)
    p.add_argument("--traits", help="observed traits (needed by --mode causal)")
    p.add_argument("--mode", choices=("genetic", "causal"), default="genetic")
    p.add_argument("--impute-mean", action="store_true")
    p.add_argument("--out", help="CSV to write (default stdout)")

    p = sub.add_parser("query", parents=[common], help="conditional mean and sd of nodes")
    p.add_argument("--model", required=True)
    p.add_argument("--targets", required=True, help="comma-separated node ids")
    p.add_argument("--evidence", action="append", default=[],
                   help="'node=1.5' or 'node in [lo,hi]'; repeatable")
    p.add_argument("--engine", choices=(*ENGINES, "weighting"), default="exact")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--out", help="CSV to write (default stdout)")

    p = sub.add_parser("cv", parents=[common], help="repeated k-fold cross-validation")
    _data_args(p)
    _learn_args(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", required=True, help="report CSV (trait,metric,mean,sd)")
    p.add_argument("--model-dir", help="directory for the per-fold model files")

    p = sub.add_parser("average", parents=[common], help="average a directory of model files")
    p.add_argument("--models", required=True, help="directory of model files (*.json)")
    p.add_argument("--threshold", default="auto", help="'auto' or a number in [0, 1]")
    p.add_argument("--out", required=True, help="averaged model file")
    p.add_argument("--strengths", help="arc strength CSV (parent,child,frequency)")
    p.add_argument("--dot", help="DOT rendering with strength-weighted arcs")
    _data_args(p, required=False)
    _fit_args(p)

    p = sub.add_parser("simulate", parents=[common], help="simulate genotypes and traits")
    p.add_argument("--spec", help="JSON simulation spec")
    p.add_argument("--n", type=int)
    p.add_argument("--snps", type=int)
    p.add_argument("--ld-rho", type=float)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("gblup-verify", parents=[common],
                       help="check the network view of a multivariate GBLUP model")
    p.add_argument("--genotypes", required=True)
    p.add_argument("--genetic", default="1", help="trait genetic covariance, rows split by ';'")
    p.add_argument("--residual", default="1", help="trait residual covariance, rows split by ';'")
    p.add_argument("--g-policy", choices=("identity", "crossprod"), default="identity")
    p.add_argument("--scale", type=float)
    p.add_argument("--means", help="comma-separated trait means")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--csv", help="write the per-pair table here")

    p = sub.add_parser("export-dot", parents=[common], help="render a model file as DOT")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="DOT file (default stdout)")
    return parser


def _matrix(text: str) -> np.ndarray:
    try:
        return np.array([[float(v) for v in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise ConfigError(f"cannot parse matrix {text!r}; use '1,0.5;0.5,1'") from None


def _require_seed(args, why: str) -> int:
    if getattr(args, "seed", None) is None:
        raise ConfigError(f"--seed is required {why}")
    return args.seed


def _dataset(args):
    tiers = parse_tiers(args.tiers) if args.tiers else None
    return load_dataset(args.genotypes, args.traits, tiers, impute_mean=args.impute_mean)


def _search(args, seed: int) -> SearchConfig:
    return SearchConfig(alpha=args.alpha, max_cond_size=args.max_cond, restarts=args.restarts,
                        perturb=args.perturb, seed=seed)


def _emit(path, write) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            write(fh)
    else:
        write(sys.stdout)


def cmd_learn(args) -> None:
    seed = _require_seed(args, "with --restarts") if args.restarts else getattr(args, "seed", 0) or 0
    data = _dataset(args)
    policy = parse_lambda_policy(args.lambda_policy)
    bn = learn_bn(data, _search(args, seed), args.fit, policy, args.min_maf, args.r_max)
    meta = {"alpha": args.alpha, "max_cond_size": args.max_cond, "restarts": args.restarts,
            "seed": seed, "min_maf": args.min_maf, "r_max": args.r_max,
            "fingerprint": data.fingerprint(), "n": data.n}
    ModelFile.from_bn(bn, meta).save(args.out)
    if args.dot:
        Path(args.dot).write_text(to_dot(bn.dag, precision=args.precision))


def cmd_predict(args) -> None:
    bn = ModelFile.load(args.model).bn
    g = load_genotypes(args.genotypes, impute_mean=args.impute_mean)
    observed = None
    if args.traits:
        t = load_traits(args.traits, impute_mean=args.impute_mean)
        pos = {i: k for k, i in enumerate(t.individual_ids)}
        missing = [i for i in g.individual_ids if i not in pos]
        if missing:
            raise DataError(f"individual {missing[0]!r} has genotypes but no trait row")
        observed = t.select_rows([pos[i] for i in g.individual_ids])
    elif args.mode == "causal":
        raise ConfigError("--mode causal needs --traits with the observed parent traits")
    out = predict(bn, g, args.mode, observed)
    if args.out:
        write_table(args.out, out.individual_ids, out.trait_ids, out.values, args.precision)
    else:
        fmt = lambda v: f"{v:.{args.precision}g}"  # noqa: E731
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["id", *out.trait_ids])
        for i, row in zip(out.individual_ids, out.values):
            w.writerow([i, *map(fmt, row)])


def cmd_query(args) -> None:
    bn = ModelFile.load(args.model).bn
    seed = 0
    if args.engine != "exact":
        seed = _require_seed(args, "for sampling engines")
    ev = Evidence.parse(args.evidence)
    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    res = query(bn, targets, ev, args.engine, args.samples, seed)
    fmt = lambda v: f"{v:.{args.precision}g}"  # noqa: E731

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "mean", "sd", "mc_se"])
        for t in targets:
            w.writerow([t, fmt(res.mean[t]), fmt(res.sd[t]), fmt(res.mc_se[t])])

    _emit(args.out, write)


def cmd_cv(args) -> None:
    seed = _require_seed(args, "for cross-validation")
    data = _dataset(args)
    cfg = CvConfig(args.runs, args.folds, _search(args, seed), args.fit,
                   parse_lambda_policy(args.lambda_policy), seed, args.min_maf, args.r_max)
    report = run_cv(data, cfg, args.model_dir, threads=args.threads)
    report.write_csv(args.out, args.precision)
    for run, fold, why in report.skipped:
        print(f"warning: run {run} fold {fold} skipped: {why}", file=sys.stderr)


def cmd_average(args) -> None:
    files = sorted(Path(args.models).glob("*.json"))
    if not files:
        raise DataError(f"no model files (*.json) in {args.models}")
    models = [ModelFile.load(f) for f in files]
    universe: dict[str, Node] = {}
    for m in models:
        for n in m.dag.nodes:
            if universe.setdefault(n.id, n) != n:
                raise DataError(f"node {n.id!r} has conflicting kind or tier across model files")
    nodes = tuple(universe[k] for k in sorted(universe, key=lambda k: (universe[k].kind, k)))
    table = arc_strengths([m.dag.with_nodes(nodes) for m in models])
    if args.threshold == "auto":
        threshold = estimate_threshold(table) if table.arcs else 0.0
    else:
        try:
            threshold = float(args.threshold)
        except ValueError:
            raise ConfigError(f"--threshold must be 'auto' or a number, got {args.threshold!r}") from None
    dag = averaged_network(table, threshold, nodes)
    meta = {"threshold": threshold, "network_count": table.network_count}
    if args.genotypes or args.traits:
        if not (args.genotypes and args.traits):
            raise ConfigError("fitting the averaged network needs both --genotypes and --traits")
        data = _dataset(args)
        bn = fit(dag, data, args.fit, parse_lambda_policy(args.lambda_policy))
        meta["fingerprint"] = data.fingerprint()
        mf = ModelFile.from_bn(bn, meta, table.arcs)
    else:
        mf = ModelFile(dag, metadata=meta, strengths=table.arcs)
    mf.save(args.out)
    if args.strengths:
        table.write_csv(args.strengths, args.precision)
    if args.dot:
        Path(args.dot).write_text(to_dot(dag, table.arcs, args.precision))


def _sim_spec(args, seed: int) -> SimSpec:
    raw = {}
    if args.spec:
        try:
            raw = json.loads(Path(args.spec).read_text())
        except FileNotFoundError:
            raise DataError(f"spec file not found: {args.spec}") from None
        except json.JSONDecodeError as e:
            raise DataError(f"spec file is not valid JSON: {e}") from None
    for key, val in (("n", args.n), ("s", args.snps), ("ld_rho", args.ld_rho)):
        if val is not None:
            raw[key] = val
    if "n" not in raw or "s" not in raw:
        raise ConfigError("simulation needs --n and --snps (or a --spec file defining n and s)")
    try:
        traits = tuple(TraitSpec(**t) for t in raw.get("traits", ()))
        return SimSpec(int(raw["n"]), int(raw["s"]), tuple(raw.get("maf_range", (0.05, 0.5))),
                       float(raw.get("ld_rho", 0.0)), traits, seed, raw.get("snp_prefix", "S"))
    except TypeError as e:
        raise ConfigError(f"bad simulation spec: {e}") from None


def cmd_simulate(args) -> None:
    spec = _sim_spec(args, _require_seed(args, "for simulation"))
    data, truth = simulate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_genotypes(out / "genotypes.csv", data.genotypes)
    write_table(out / "traits.csv", data.individual_ids, data.trait_ids, data.traits.values,
                args.precision)
    with (out / "tiers.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trait", "tier"])
        w.writerows(zip(data.trait_ids, data.traits.tiers))
    ModelFile.from_bn(truth, {"seed": spec.seed, "n": spec.n, "s": spec.s,
                              "ld_rho": spec.ld_rho}).save(out / "truth.json")


def cmd_gblup_verify(args) -> None:
    seed = _require_seed(args, "for the sampling check")
    g = load_genotypes(args.genotypes)
    means = [float(v) for v in args.means.split(",")] if args.means else None
    m = build_gblup(g, args.g_policy, _matrix(args.residual), means, _matrix(args.genetic),
                    scale=args.scale)
    rep = verify_equivalence(m, args.tol, args.samples, seed)
    p = args.precision
    zeros = int(rep.zero_pattern.sum())
    d = len(rep.order)
    print(f"variables: {d} ({m.n_traits} traits x {g.n} individuals + random effects)")
    print(f"precision zeros (|entry| <= {args.tol:g}): {zeros} of {d * (d - 1)} off-diagonal")
    print(f"round-trip relative error: {rep.roundtrip_error:.{p}g}")
    print(f"samples: {rep.n_samples}; max |z| of sampled coefficients: {rep.max_abs_z:.{p}g}")
    if rep.jitter:
        print(f"jitter added: {rep.jitter:g}")
    print("sampled regressions within 3 SE: " + ("yes" if rep.within else "no"))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["response", "regressor", "implied", "sampled", "se", "zero"])
            for a, b, c, s, se, z in rep.rows():
                w.writerow([a, b, f"{c:.{p}g}", f"{s:.{p}g}", f"{se:.{p}g}", int(z)])


def cmd_export_dot(args) -> None:
    mf = ModelFile.load(args.model)
    text = to_dot(mf.dag, mf.strengths, args.precision)
    _emit(args.out, lambda fh: fh.write(text))


COMMANDS = {
    "learn": cmd_learn, "predict": cmd_predict, "query": cmd_query, "cv": cmd_cv,
    "average": cmd_average, "simulate": cmd_simulate, "gblup-verify": cmd_gblup_verify,
    "export-dot": cmd_export_dot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", None)
    args.threads = getattr(args, "threads", None) or os.cpu_count() or 1
    args.precision = getattr(args, "precision", 6)
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except BnError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
