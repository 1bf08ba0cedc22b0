"""Command-line interface: ``hetbf scan|config-scan|oracle|simulate|forest``.

Exit codes: 0 on success, 1 on usage errors, 2 on data or file errors.
"""

from __future__ import annotations

import argparse
import contextlib
import itertools
import math
import sys
from typing import Sequence

from ..abf import abf_average
from ..configbf import config_scan, default_config_grid
from ..engine import ScanConfig, het_only_hits, rank_and_group, scan
from ..errors import DataError, HetBFError
from ..oracle import bf_quad, panel_records, simulate_suffstats_arrays
from ..priors import (
    ES_EQTL_RATIOS,
    LIPIDS_MARGINALS,
    Family,
    PriorGrid,
    cefn_grid,
    default_es_grid,
    grid_from_marginal_heterogeneity,
    parse_grid_shorthand,
    read_grid,
)
from . import io

MODELS = ("es", "ee", "cefn-es", "cefn-ee", "cc")
METHODS = ("abf", "corrected", "laplace")
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_input(p):
    p.add_argument("input", nargs="?", help="sumstats or suffstats file (omit for raw formats)")
    p.add_argument("--format", choices=io.FORMATS, default="sumstats")
    p.add_argument("--raw", action="append", default=[], metavar="SUB:PHENO:GENO",
                   help="subgroup phenotype and genotype files (repeat per subgroup)")


def _add_prior(p, default_model="es"):
    p.add_argument("--model", choices=MODELS, default=default_model)
    p.add_argument("--grid", help="shorthand 'm1,m2,...:r1,r2,...' (marginal sds : het/mean ratios)")
    p.add_argument("--grid-file", help="grid TSV with columns family het_sd mean_sd cefn_k weight")
    p.add_argument("--cefn-k", type=float, default=None, help="CEFN coefficient k (default 0.314)")


def _add_out(p):
    p.add_argument("--out", default="-", help="output file ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hetbf", description="Bayes factors for association across heterogeneous subgroups")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scan", help="per-SNP Bayes factors")
    _add_input(p)
    _add_prior(p)
    p.add_argument("--method", default="abf",
                   help="comma-separated subset of abf,corrected,laplace")
    p.add_argument("--fix", action="store_true", help="also report the fixed-effects extreme")
    p.add_argument("--maxh", action="store_true", help="also report the maximum-heterogeneity extreme")
    p.add_argument("--configs", action="store_true", help="add the best configuration per SNP")
    p.add_argument("--het-only", action="store_true",
                   help="keep SNPs with maxh or cefn >= threshold while fix < threshold (implies --fix --maxh)")
    p.add_argument("--threshold", type=float, default=6.0, help="log10 threshold for --het-only")
    p.add_argument("--rank", metavar="COLUMN", help="sort rows by this log10 column, descending")
    p.add_argument("--groups", help="file 'snp group'; with --rank keeps the top SNP per group")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    _add_out(p)

    p = sub.add_parser("config-scan", help="Bayes factors of all activity configurations")
    _add_input(p)
    _add_prior(p, default_model="cefn-es")
    p.add_argument("--method", choices=METHODS, default="abf")
    _add_out(p)

    p = sub.add_parser("oracle", help="quadrature Bayes factors (up to 3 subgroups)")
    _add_input(p)
    _add_prior(p)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    _add_out(p)

    p = sub.add_parser("simulate", help="simulate sufficient statistics for independent SNPs")
    p.add_argument("--snps", type=int, required=True)
    p.add_argument("--n", required=True, help="comma-separated sample size per subgroup")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--maf-min", type=float, default=0.05)
    p.add_argument("--maf-max", type=float, default=0.5)
    p.add_argument("--missing-prob", type=float, default=0.0)
    p.add_argument("--effect-sd", type=float, default=0.0, help="sd of the standardized SNP effect")
    _add_out(p)

    p = sub.add_parser("forest", help="per-subgroup estimates with 95%% intervals")
    _add_input(p)
    _add_out(p)
    return parser


# argument interpretation

def _family(model: str) -> Family:
    return {"es": Family.ES, "ee": Family.EE, "cefn-es": Family.CEFN_ES,
            "cefn-ee": Family.CEFN_EE, "cc": Family.EE}[model]


def _k(args) -> float:
    return 0.314 if args.cefn_k is None else args.cefn_k


def _grid(args) -> PriorGrid:
    """Prior grid for the model; CEFN models return the CEFN grid."""
    fam = _family(args.model)
    if args.grid and args.grid_file:
        raise UsageError("use either --grid or --grid-file")
    if args.grid_file:
        try:
            with open(args.grid_file, encoding="utf-8") as fh:
                grid = read_grid(fh.read())
        except ValueError as exc:
            raise HetBFError(f"{args.grid_file}: {exc}") from None
        if any(p.family is not fam for p in grid.priors):
            raise UsageError(f"grid file families do not match model {args.model}")
        return grid
    if args.grid:
        try:
            return parse_grid_shorthand(args.grid, fam, _k(args) if fam.is_cefn else None)
        except ValueError as exc:
            raise UsageError(f"--grid: {exc}") from None
    if fam is Family.ES:
        return default_es_grid()
    if fam is Family.CEFN_ES:
        return default_config_grid(_k(args))
    if fam is Family.CEFN_EE:
        return cefn_grid(LIPIDS_MARGINALS, _k(args), family=Family.CEFN_EE)
    return grid_from_marginal_heterogeneity(LIPIDS_MARGINALS, ES_EQTL_RATIOS, family="EE")


def _scan_config(args) -> ScanConfig:
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"--method must be a comma-separated subset of {','.join(METHODS)}")
    fam = _family(args.model)
    grid = _grid(args)
    fix = args.fix or args.het_only
    maxh = args.maxh or args.het_only
    if fam.is_cefn:
        if "laplace" in methods:
            raise UsageError("the Laplace method is not available for CEFN models")
        # the CEFN grid supplies the marginals; the scan runs on the base family
        base = fam.base
        ks = {p.cefn_k for p in grid.priors}
        if len(ks) != 1:
            raise UsageError("CEFN grids must share one k")
        marg = sorted({p.mean_sd * math.sqrt(1 + p.cefn_k ** 2) for p in grid.priors})
        base_grid = grid_from_marginal_heterogeneity(marg, [0.0], family=base.value)
        return ScanConfig(family=base, grid=base_grid, methods=("cefn",), fix=fix, maxh=maxh,
                          correction="corrected" in methods, cefn_k=ks.pop(),
                          configurations=args.configs, input_mode=args.format)
    scan_methods = []
    for m in methods:
        scan_methods.append({"abf": "abf", "corrected": "abf_corrected", "laplace": "laplace"}[m])
    try:
        return ScanConfig(family=fam, grid=grid, methods=tuple(scan_methods), fix=fix, maxh=maxh,
                          correction="corrected" in methods, cefn_k=_k(args),
                          configurations=args.configs, input_mode=args.format)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_format(args):
    if args.format in ("raw", "cc_raw"):
        if not args.raw:
            raise UsageError(f"--format {args.format} needs at least one --raw SUB:PHENO:GENO")
        if args.input:
            raise UsageError(f"--format {args.format} reads --raw sources, not a positional input")
    elif not args.input:
        raise UsageError("an input file is required")
    if getattr(args, "model", None) == "cc" and args.format != "cc_raw":
        raise UsageError("--model cc needs --format cc_raw")
    if args.format == "cc_raw" and getattr(args, "model", "cc") != "cc":
        raise UsageError("--format cc_raw needs --model cc")


def _records(args):
    try:
        raws = [io.RawSource.parse(s) for s in args.raw]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.format in ("raw", "cc_raw"):
        records = io.read_raw(raws, binary=args.format == "cc_raw")
    else:
        records = io.read_input(args.input, args.format)
    # read the first record before any output is written, so header and
    # file errors leave no partial table behind
    first = next(records, None)
    if first is None:
        raise DataError("no SNPs in input")
    return itertools.chain([first], records)


@contextlib.contextmanager
def _output(path):
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    with fh:
        yield fh


# subcommands

def cmd_scan(args) -> int:
    _check_format(args)
    config = _scan_config(args)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    rows = scan(_records(args), config, workers=args.threads)
    if args.het_only:
        rows = het_only_hits(rows, args.threshold)
    if args.rank or args.groups:
        rows = list(rows)
        column = args.rank or config.columns[0]
        groups = io.read_groups(args.groups) if args.groups else None
        try:
            rows = rank_and_group(rows, column, groups)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    with _output(args.out) as out:
        io.write_results(rows, config.columns, out, configurations=config.configurations)
    return EXIT_OK


def cmd_config_scan(args) -> int:
    _check_format(args)
    grid = _grid(args)
    records = _records(args)
    with _output(args.out) as out:
        out.write("snp\tconfiguration\tlog10_bf\tflags\n")
        for rec in records:
            if rec.meta.get("invalid"):
                out.write(f"{rec.snp}\tNA\tNA\t{','.join(rec.meta['flags'])}\n")
                continue
            for c, res in config_scan(rec, grid, args.method):
                flags = ",".join(res.flags) if res.flags else "."
                out.write(f"{rec.snp}\t{c}\t{io.fmt(res.log10_bf)}\t{flags}\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    _check_format(args)
    if args.format not in ("suffstats", "raw"):
        raise UsageError("the oracle needs --format suffstats or raw")
    grid = _grid(args)
    records = _records(args)
    with _output(args.out) as out:
        out.write("snp\tlog10_bf\trel_error\tflags\n")
        for rec in records:
            if rec.meta.get("invalid"):
                out.write(f"{rec.snp}\tNA\tNA\t{','.join(rec.meta['flags'])}\n")
                continue
            comps = [bf_quad(rec, p, args.rel_tol) for p in grid.priors]
            res = abf_average(comps, grid.weights)
            rel = max(c.rel_error for c in comps)
            out.write(f"{rec.snp}\t{io.fmt(res.log10_bf)}\t{io.fmt(rel)}\t.\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        ns = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError:
        raise UsageError("--n must be comma-separated integers") from None
    if not ns or min(ns) < 3 or args.snps < 1:
        raise UsageError("need --snps >= 1 and every --n >= 3")
    if not 0 < args.maf_min <= args.maf_max <= 0.5:
        raise UsageError("need 0 < --maf-min <= --maf-max <= 0.5")
    if not 0 <= args.missing_prob < 1:
        raise UsageError("--missing-prob must lie in [0, 1)")
    ss = simulate_suffstats_arrays(args.snps, ns, args.seed, maf_range=(args.maf_min, args.maf_max),
                                   missing_prob=args.missing_prob, effect_sd=args.effect_sd)
    records = panel_records(ss)
    with _output(args.out) as out:
        io.write_suffstats(records, out)
    return EXIT_OK


def cmd_forest(args) -> int:
    _check_format(args)
    config = ScanConfig(family=Family.EE, grid=grid_from_marginal_heterogeneity([1.0], [1.0], family="EE"))
    rows = scan(_records(args), config)
    with _output(args.out) as out:
        io.write_forest(rows, out)
    return EXIT_OK


COMMANDS = {
    "scan": cmd_scan,
    "config-scan": cmd_config_scan,
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "forest": cmd_forest,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hetbf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HetBFError, ValueError, OSError) as exc:
        print(f"hetbf: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
