"""File formats: reading SNP records and writing result tables.

All inputs are tab- or whitespace-separated text with a header line.
Numbers are parsed with :func:`float`, which only accepts a decimal point
and ignores the process locale.  Lines of one SNP must be contiguous, so
files are read as a stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

from ..casecontrol import CCSubgroupSummary, logistic_mle
from ..engine import ScanRow
from ..errors import DataError, DegenerateFitError, SeparationError
from ..stats import (
    SnpRecord,
    SubgroupSuffStats,
    _non_informative,
    summarize,
    summary_from_effect_se,
    suffstats_from_raw,
)

SUMSTATS_HEADER = ("snp", "subgroup", "n", "beta_hat", "se_beta")
SUMSTATS_OPTIONAL = "sigma_hat"
SUFFSTATS_HEADER = ("snp", "subgroup", "n", "sum_y", "sum_g", "sum_yy", "sum_gg", "sum_yg")
FOREST_HEADER = ("snp", "subgroup", "beta_hat", "ci_lo", "ci_hi")
FORMATS = ("sumstats", "suffstats", "raw", "cc_raw")
MISSING = {"NA", "NaN", "nan", "."}
CI_Z = 1.96


def fmt(x) -> str:
    """Six significant digits; NA for missing values."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return "%.6g" % x


def _fields(line: str) -> list[str]:
    return line.rstrip("\r\n").split("\t") if "\t" in line else line.split()


def _number(text: str, what: str, where: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"{where}: {what} is not a number: {text!r}") from None
    if not math.isfinite(val):
        raise DataError(f"{where}: {what} must be finite, got {text!r}")
    return val


def _integer(text: str, what: str, where: str) -> int:
    val = _number(text, what, where)
    if val != int(val):
        raise DataError(f"{where}: {what} must be an integer, got {text!r}")
    return int(val)


def _lines(handle: TextIO, name: str):
    """Yield (lineno, fields) for non-blank, non-comment lines."""
    for lineno, line in enumerate(handle, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, _fields(line)


def _grouped(rows, name: str):
    """Group consecutive rows by SNP id, rejecting duplicates and split SNPs."""
    seen_snps = set()
    current, block = None, []
    subgroups = set()
    for lineno, f in rows:
        snp, sub = f[0], f[1]
        where = f"{name}:{lineno}"
        if snp != current:
            if block:
                yield current, block
            if snp in seen_snps:
                raise DataError(f"{where}: lines for SNP {snp!r} are not contiguous")
            seen_snps.add(snp)
            current, block, subgroups = snp, [], set()
        if sub in subgroups:
            raise DataError(f"{where}: duplicate (snp, subgroup) pair ({snp}, {sub})")
        subgroups.add(sub)
        block.append((where, f))
    if block:
        yield current, block


def _check_header(fields, expected, name, optional=()):
    got = tuple(fields)
    allowed = [tuple(expected)] + [tuple(expected) + (o,) for o in optional]
    if got not in allowed:
        want = " ".join(expected) + "".join(f" [{o}]" for o in optional)
        raise DataError(f"{name}:1: malformed header {' '.join(got)!r}; expected {want!r}")


def _first(rows, name):
    try:
        return next(rows)
    except StopIteration:
        raise DataError(f"{name}: empty file (no header)") from None


def _checked(rows, width, name):
    for lineno, f in rows:
        if len(f) != width:
            raise DataError(f"{name}:{lineno}: expected {width} fields, got {len(f)}")
        yield lineno, f


def _flagged_record(snp, labels, sums, sst, flags):
    meta = {"flags": tuple(flags), "invalid": True} if flags else {}
    return SnpRecord(snp, tuple(labels), tuple(sums), sst, meta)


def read_sumstats(handle: TextIO, name: str = "<sumstats>") -> Iterator[SnpRecord]:
    """Records from ``snp subgroup n beta_hat se_beta [sigma_hat]``.

    Without ``sigma_hat`` only the EE family can be scanned.
    """
    rows = _lines(handle, name)
    _, header = _first(rows, name)
    _check_header(header, SUMSTATS_HEADER, name, optional=(SUMSTATS_OPTIONAL,))
    has_sigma = len(header) == 6
    for snp, block in _grouped(_checked(rows, len(header), name), name):
        labels, sums = [], []
        for where, f in block:
            n = _integer(f[2], "n", where)
            beta = _number(f[3], "beta_hat", where)
            se = _number(f[4], "se_beta", where)
            sigma = _number(f[5], "sigma_hat", where) if has_sigma else None
            try:
                sums.append(summary_from_effect_se(beta, se, n, sigma))
            except ValueError as exc:
                raise DataError(f"{where}: {exc}") from None
            labels.append(f[1])
        yield SnpRecord(snp, tuple(labels), tuple(sums))


def read_suffstats(handle: TextIO, name: str = "<suffstats>") -> Iterator[SnpRecord]:
    """Records from ``snp subgroup n sum_y sum_g sum_yy sum_gg sum_yg``.

    A subgroup whose regression fits perfectly marks the record invalid
    (its row is flagged in scans) instead of stopping the read.
    """
    rows = _lines(handle, name)
    _, header = _first(rows, name)
    _check_header(header, SUFFSTATS_HEADER, name)
    for snp, block in _grouped(_checked(rows, len(SUFFSTATS_HEADER), name), name):
        labels, sums, sst, flags = [], [], [], []
        for where, f in block:
            n = _integer(f[2], "n", where)
            vals = [_number(t, c, where) for t, c in zip(f[3:], SUFFSTATS_HEADER[3:])]
            try:
                s = SubgroupSuffStats(n, *vals)
            except ValueError as exc:
                raise DataError(f"{where}: {exc}") from None
            try:
                summ = summarize(s)
            except DegenerateFitError:
                flags.append(f"perfect_fit:{f[1]}")
                summ = _non_informative(n)
            labels.append(f[1])
            sst.append(s)
            sums.append(summ)
        yield _flagged_record(snp, labels, sums, tuple(sst), flags)


def write_suffstats(records: Iterable[SnpRecord], out: TextIO) -> None:
    """Write records that carry sufficient statistics; floats round-trip exactly."""
    out.write("\t".join(SUFFSTATS_HEADER) + "\n")
    for rec in records:
        if rec.suffstats is None:
            raise DataError(f"SNP {rec.snp} has no sufficient statistics")
        for lab, s in zip(rec.subgroups, rec.suffstats):
            vals = [repr(float(v)) for v in s.as_tuple()[1:]]
            out.write("\t".join([rec.snp, lab, str(s.n), *vals]) + "\n")


# raw individual-level data

@dataclass(frozen=True)
class RawSource:
    """Phenotype and genotype files of one subgroup."""

    subgroup: str
    phenotype: str
    genotype: str

    @classmethod
    def parse(cls, text: str) -> "RawSource":
        """From ``subgroup:phenotype.tsv:genotype.tsv``."""
        parts = text.split(":")
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"raw source must be 'subgroup:phenotypes:genotypes', got {text!r}")
        return cls(*parts)


def _read_phenotypes(path: str, binary: bool) -> dict[str, float]:
    with open(path, encoding="utf-8") as fh:
        rows = _lines(fh, path)
        _, header = _first(rows, path)
        if tuple(header) != ("id", "y"):
            raise DataError(f"{path}:1: malformed header; expected 'id y'")
        out = {}
        for lineno, f in _checked(rows, 2, path):
            where = f"{path}:{lineno}"
            if f[0] in out:
                raise DataError(f"{where}: duplicate id {f[0]!r}")
            if f[1] in MISSING:
                continue
            y = _number(f[1], "y", where)
            if binary and y not in (0.0, 1.0):
                raise DataError(f"{where}: case-control outcome must be 0 or 1, got {f[1]!r}")
            out[f[0]] = y
    return out


def _read_genotypes(path: str) -> tuple[list[str], list[str], np.ndarray]:
    """Genotype file ``id g`` or ``id snp1 snp2 ...``; values are dosages in [0, 2]."""
    with open(path, encoding="utf-8") as fh:
        rows = _lines(fh, path)
        _, header = _first(rows, path)
        if len(header) < 2 or header[0] != "id":
            raise DataError(f"{path}:1: malformed header; expected 'id' followed by SNP columns")
        snps = list(header[1:])
        if len(set(snps)) != len(snps):
            raise DataError(f"{path}:1: duplicate SNP column")
        ids, vals = [], []
        seen = set()
        for lineno, f in _checked(rows, len(header), path):
            where = f"{path}:{lineno}"
            if f[0] in seen:
                raise DataError(f"{where}: duplicate id {f[0]!r}")
            seen.add(f[0])
            row = []
            for t, snp in zip(f[1:], snps):
                if t in MISSING:
                    row.append(math.nan)
                    continue
                g = _number(t, f"genotype of {snp}", where)
                if not 0.0 <= g <= 2.0:
                    raise DataError(f"{where}: genotype of {snp} outside [0, 2]: {t!r}")
                row.append(g)
            ids.append(f[0])
            vals.append(row)
    return ids, snps, np.array(vals, dtype=float).reshape(len(ids), len(snps))


def read_raw(sources: Sequence[RawSource], binary: bool = False) -> Iterator[SnpRecord]:
    """Records from individual-level data, one phenotype and genotype file per subgroup.

    Individuals are joined on id.  A SNP absent from a subgroup's genotype
    file is a missing subgroup for that SNP.  SNP order follows the first
    appearance across the genotype files.
    """
    if not sources:
        raise DataError("no raw sources given")
    labels = [s.subgroup for s in sources]
    if len(set(labels)) != len(labels):
        raise DataError("duplicate subgroup in raw sources")
    data = []
    order: dict[str, None] = {}
    for src in sources:
        pheno = _read_phenotypes(src.phenotype, binary)
        ids, snps, G = _read_genotypes(src.genotype)
        keep = [i for i, x in enumerate(ids) if x in pheno]
        y = np.array([pheno[ids[i]] for i in keep])
        data.append((y, {snp: G[keep, j] for j, snp in enumerate(snps)}))
        order.update(dict.fromkeys(snps))
    for snp in order:
        labs, sums, sst, flags = [], [], [], []
        for lab, (y, cols) in zip(labels, data):
            if snp not in cols:
                continue
            g = cols[snp]
            ok = np.isfinite(g)
            yy, gg = y[ok], g[ok]
            try:
                if binary:
                    try:
                        summ = logistic_mle(yy, gg)
                    except SeparationError:
                        flags.append(f"separation:{lab}")
                        summ = CCSubgroupSummary(math.nan, math.inf, 0.0, math.nan,
                                                 ((math.nan,) * 2,) * 2, yy.size, False)
                else:
                    s = suffstats_from_raw(yy, gg)
                    sst.append(s)
                    try:
                        summ = summarize(s)
                    except DegenerateFitError:
                        flags.append(f"perfect_fit:{lab}")
                        summ = _non_informative(s.n)
            except DataError as exc:
                raise DataError(f"SNP {snp}, subgroup {lab}: {exc}") from None
            labs.append(lab)
            sums.append(summ)
        if labs:
            yield _flagged_record(snp, labs, sums, None if binary else tuple(sst), flags)


def read_input(path: str | None, fmt_name: str, raw_sources: Sequence[str] = ()) -> Iterator[SnpRecord]:
    """Dispatch on the input format.  ``path`` is unused for raw formats."""
    if fmt_name not in FORMATS:
        raise ValueError(f"unknown format {fmt_name!r}; choose from {FORMATS}")
    if fmt_name in ("raw", "cc_raw"):
        srcs = [RawSource.parse(s) for s in raw_sources]
        yield from read_raw(srcs, binary=fmt_name == "cc_raw")
        return
    if path is None:
        raise ValueError("an input file is required")
    reader = read_sumstats if fmt_name == "sumstats" else read_suffstats
    with open(path, encoding="utf-8") as fh:
        yield from reader(fh, path)


def read_groups(path: str) -> dict[str, str]:
    """SNP-to-group map from a two-column file ``snp group``."""
    with open(path, encoding="utf-8") as fh:
        rows = _lines(fh, path)
        _, header = _first(rows, path)
        if tuple(header) != ("snp", "group"):
            raise DataError(f"{path}:1: malformed header; expected 'snp group'")
        out = {}
        for lineno, f in _checked(rows, 2, path):
            if f[0] in out:
                raise DataError(f"{path}:{lineno}: duplicate SNP {f[0]!r}")
            out[f[0]] = f[1]
    return out


# output tables

def result_columns(columns: Sequence[str], configurations: bool = False) -> tuple[str, ...]:
    head = ["snp"] + [f"log10_bf_{c}" if not c.startswith("het_") else f"log10_{c}" for c in columns]
    if configurations:
        head.append("best_config")
    head.append("flags")
    return tuple(head)


def write_results(rows: Iterable[ScanRow], columns: Sequence[str], out: TextIO,
                  configurations: bool = False) -> int:
    """Results TSV with a fixed column order; returns the number of rows written."""
    out.write("\t".join(result_columns(columns, configurations)) + "\n")
    count = 0
    for r in rows:
        cells = [r.snp] + [fmt(r.values[c]) for c in columns]
        if configurations:
            cells.append(r.best_config or "NA")
        cells.append(",".join(r.flags) if r.flags else ".")
        out.write("\t".join(cells) + "\n")
        count += 1
    return count


def forest_rows(row: ScanRow) -> list[tuple[str, str, float, float, float]]:
    out = []
    for lab, b, se in zip(row.subgroups, row.beta_hat, row.se_beta):
        if math.isfinite(b) and math.isfinite(se):
            out.append((row.snp, lab, b, b - CI_Z * se, b + CI_Z * se))
        else:
            out.append((row.snp, lab, math.nan, math.nan, math.nan))
    return out


def write_forest(rows: Iterable[ScanRow], out: TextIO) -> None:
    """Forest-plot data: per-subgroup estimate with a 95% interval (1.96 se)."""
    out.write("\t".join(FOREST_HEADER) + "\n")
    for r in rows:
        for snp, lab, b, lo, hi in forest_rows(r):
            out.write("\t".join([snp, lab, fmt(b), fmt(lo), fmt(hi)]) + "\n")
