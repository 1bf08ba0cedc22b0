"""Batch scans over many SNPs: per-SNP Bayes factors, ranking and diagnostics.

Analytic ABF columns are computed for a whole chunk of SNPs at once.  The
quadrature-based columns (Laplace, CEFN, configuration scans) are evaluated
SNP by SNP.  Chunks have a fixed size, so the work split, and with it every
floating-point operation, does not depend on the number of workers.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .abf import LN10, corrected_estimates, grid_arrays, log_abf_grid_batch
from .configbf import best_configuration, config_scan, default_config_grid
from .dispatch import bf_grid
from .errors import DataError, HetBFError
from .priors import Family, PriorGrid, cefn_grid, default_es_grid, grid_from_marginal_heterogeneity
from .stats import SnpRecord

SCAN_METHODS = ("abf", "abf_corrected", "laplace", "cefn")
CHUNK_SIZE = 2048
HET_ONLY_THRESHOLD = 6.0
DEFAULT_CEFN_K = 0.314


@dataclass(frozen=True)
class ScanConfig:
    """What to compute for every SNP.

    Parameters
    ----------
    family : {"ES", "EE"}
        Effect scale for all analytic columns.
    grid : PriorGrid
        ES or EE grid; its average gives the ``abf``, ``abf_corrected`` and
        ``laplace`` columns.
    methods : tuple of str
        Subset of :data:`SCAN_METHODS`.
    fix, maxh : bool
        Also report the fixed-effects and maximum-heterogeneity extremes,
        averaged uniformly over the grid's marginal prior sds.
    correction : bool
        Apply the small-sample correction to the extremes and the CEFN column.
    cefn_k : float
        CEFN coefficient for the ``cefn`` column.
    configurations : bool
        Add the best configuration and its Bayes factor to every row.
    config_prior : EffectPrior or PriorGrid, optional
        Prior for the configuration scan (default CEFN-ES grid).
    input_mode : {"sumstats", "suffstats", "raw", "cc_raw"}, optional
        When given, checked against the requested methods up front.
    """

    family: Family = Family.ES
    grid: PriorGrid = field(default_factory=default_es_grid)
    methods: tuple[str, ...] = ("abf",)
    fix: bool = False
    maxh: bool = False
    correction: bool = False
    cefn_k: float = DEFAULT_CEFN_K
    configurations: bool = False
    config_prior: object = None
    input_mode: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.family.is_cefn:
            raise ValueError("scan family must be ES or EE; request CEFN through the methods")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = [m for m in self.methods if m not in SCAN_METHODS]
        if bad:
            raise ValueError(f"unknown scan method(s) {bad}; choose from {SCAN_METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate scan methods")
        if any(p.family.base is not self.family or p.family.is_cefn for p in self.grid.priors):
            raise ValueError(f"grid priors must all be of family {self.family.value}")
        if not (self.cefn_k >= 0 and math.isfinite(self.cefn_k)):
            raise ValueError("cefn_k must be finite and >= 0")
        if self.input_mode is not None:
            if self.input_mode not in ("sumstats", "suffstats", "raw", "cc_raw"):
                raise ValueError(f"unknown input mode {self.input_mode!r}")
            if "laplace" in self.methods and self.input_mode == "sumstats":
                raise ValueError("the Laplace method needs sufficient statistics or raw data")
            if self.input_mode == "cc_raw" and (
                self.family is not Family.EE or self.correction or set(self.methods) != {"abf"}
            ):
                raise ValueError("case-control data support the EE family with the analytic ABF only")

    @property
    def marginals(self) -> tuple[float, ...]:
        """Distinct marginal prior sds ``sqrt(het^2 + mean^2)`` of the grid."""
        m = {round(math.hypot(p.het_sd, p.mean_sd), 12) for p in self.grid.priors}
        return tuple(sorted(x for x in m if x > 0))

    def extreme_grid(self, kind: str) -> PriorGrid:
        ratio = 0.0 if kind == "fix" else math.inf
        return grid_from_marginal_heterogeneity(self.marginals, [ratio], family=self.family.value)

    def cefn_grid(self) -> PriorGrid:
        fam = "CEFN_ES" if self.family is Family.ES else "CEFN_EE"
        return cefn_grid(self.marginals, self.cefn_k, family=fam)

    @property
    def columns(self) -> tuple[str, ...]:
        """Log10 value columns of every row, in output order."""
        cols = list(self.methods)
        if self.fix:
            cols.append("fix")
        if self.maxh:
            cols.append("maxh")
        if "cefn" in self.methods and self.fix:
            cols.append("het_cefn_fix")
        if self.maxh and self.fix:
            cols.append("het_maxh_fix")
        if self.configurations:
            cols.append("config")
        return tuple(cols)


@dataclass(frozen=True)
class ScanRow:
    """Scan output for one SNP; all Bayes factors are log10."""

    snp: str
    values: dict
    subgroups: tuple[str, ...] = ()
    beta_hat: tuple[float, ...] = ()
    se_beta: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()
    best_config: str | None = None
    group: str | None = None

    def __getitem__(self, column: str) -> float:
        return self.values[column]


# per-chunk evaluation

def _chunk_arrays(records: Sequence[SnpRecord], family: Family):
    width = max(len(r.summaries) for r in records)
    N = len(records)
    x = np.zeros((N, width))
    v = np.full((N, width), np.inf)
    n = np.full((N, width), 10.0)
    bad = np.zeros(N, dtype=bool)
    std = family.standardized
    for i, r in enumerate(records):
        for j, s in enumerate(r.summaries):
            n[i, j] = s.n
            if not s.informative:
                continue
            if std:
                if not (math.isfinite(s.b_hat) and math.isfinite(s.delta2)):
                    bad[i] = True
                    continue
                x[i, j], v[i, j] = s.b_hat, s.delta2
            else:
                x[i, j], v[i, j] = s.beta_hat, s.d2
    return x, v, n, bad


def _batch_log10(x, v, grid: PriorGrid, rows: np.ndarray) -> np.ndarray:
    out = np.full(x.shape[0], np.nan)
    if rows.any():
        het, mean, lw = grid_arrays(grid)
        avg, _ = log_abf_grid_batch(x[rows], v[rows], het, mean, lw)
        out[rows] = avg / LN10
    return out


def _corrected(x, v, n):
    """Corrected estimates and a mask of rows where the correction is defined."""
    informative = np.isfinite(v)
    ok = ~np.any(informative & (n - 2 <= 2), axis=1)
    xc = x.copy()
    if ok.any():
        xc[ok] = corrected_estimates(x[ok], v[ok], n[ok])
    return xc, ok


def _scan_chunk(records: Sequence[SnpRecord], config: ScanConfig) -> list[ScanRow]:
    x, v, n, bad = _chunk_arrays(records, config.family)
    # records flagged invalid while reading (perfect fit, separation) get NaN rows
    invalid = np.array([bool(r.meta.get("invalid")) for r in records])
    flags = [list(r.meta.get("flags", ())) for r in records]
    bad &= ~invalid
    empty = ~np.any(np.isfinite(v), axis=1) & ~bad & ~invalid
    valid = ~bad & ~empty & ~invalid
    for i in np.flatnonzero(bad):
        flags[i].append("missing_sigma")
    for i in np.flatnonzero(empty):
        flags[i].append("no_informative_subgroup")

    cols: dict[str, np.ndarray] = {}
    need_corr = "abf_corrected" in config.methods or (config.correction and (config.fix or config.maxh))
    if need_corr:
        xc, corr_ok = _corrected(x, v, n)
        for i in np.flatnonzero(valid & ~corr_ok):
            flags[i].append("correction_undefined")
        corr_rows = valid & corr_ok
    if "abf" in config.methods:
        cols["abf"] = _batch_log10(x, v, config.grid, valid)
    if "abf_corrected" in config.methods:
        cols["abf_corrected"] = _batch_log10(xc, v, config.grid, corr_rows)
    for kind in ("fix", "maxh"):
        if getattr(config, kind):
            g = config.extreme_grid(kind)
            cols[kind] = (_batch_log10(xc, v, g, corr_rows) if config.correction
                          else _batch_log10(x, v, g, valid))
    # no informative subgroup: both hypotheses predict the data equally
    for arr in cols.values():
        arr[empty] = 0.0

    slow = [m for m in ("laplace", "cefn") if m in config.methods]
    for m in slow:
        cols[m] = np.full(len(records), np.nan)
    best = [None] * len(records)
    best_bf = np.full(len(records), np.nan)
    cgrid = config.cefn_grid() if "cefn" in config.methods else None
    cprior = config.config_prior if config.config_prior is not None else default_config_grid()
    for i, rec in enumerate(records):
        if empty[i]:
            for m in slow:
                cols[m][i] = 0.0
        elif valid[i]:
            for m in slow:
                try:
                    if m == "laplace":
                        res = bf_grid(rec, config.grid, "laplace")
                    else:
                        res = bf_grid(rec, cgrid, "corrected" if config.correction else "abf")
                    cols[m][i] = res.log10_bf
                    flags[i].extend(f for f in res.flags if f not in flags[i])
                except (HetBFError, ValueError, ArithmeticError) as exc:
                    flags[i].append(f"{m}_failed:{type(exc).__name__}")
        if config.configurations and not invalid[i]:
            try:
                table = config_scan(rec, cprior, "corrected" if config.correction else "abf")
                c = best_configuration(table)
                best[i] = str(c)
                best_bf[i] = dict((str(k), r) for k, r in table)[str(c)].log10_bf
            except (HetBFError, ValueError, ArithmeticError) as exc:
                flags[i].append(f"config_failed:{type(exc).__name__}")
    if config.configurations:
        cols["config"] = best_bf
    if "cefn" in cols and "fix" in cols:
        cols["het_cefn_fix"] = cols["cefn"] - cols["fix"]
    if "maxh" in cols and "fix" in cols:
        cols["het_maxh_fix"] = cols["maxh"] - cols["fix"]

    names = config.columns
    rows = []
    for i, rec in enumerate(records):
        rows.append(ScanRow(
            snp=rec.snp,
            values={c: float(cols[c][i]) for c in names},
            subgroups=rec.subgroups,
            beta_hat=tuple(float(s.beta_hat) for s in rec.summaries),
            se_beta=tuple(float(s.se_beta) for s in rec.summaries),
            flags=tuple(flags[i]),
            best_config=best[i],
            group=rec.meta.get("group"),
        ))
    return rows


def _chunks(records: Iterable[SnpRecord], size: int) -> Iterator[list[SnpRecord]]:
    it = iter(records)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield block


def scan(records: Iterable[SnpRecord], config: ScanConfig, workers: int = 1,
         chunk_size: int = CHUNK_SIZE) -> Iterator[ScanRow]:
    """Scan a stream of SNP records, yielding one row per SNP in input order.

    Failures of a single SNP are recorded in that row's ``flags`` and the
    value set to NaN; the scan continues.  With ``workers > 1`` chunks are
    evaluated in separate processes and merged in order, so the output is
    the same for any worker count.

    Raises
    ------
    DataError
        If the input is empty.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    chunks = _chunks(records, chunk_size)
    first = next(chunks, None)
    if first is None:
        raise DataError("no SNPs to scan")
    chunks = itertools.chain([first], chunks)
    if workers == 1:
        for block in chunks:
            yield from _scan_chunk(block, config)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        for block in chunks:
            pending.append(pool.submit(_scan_chunk, block, config))
            # bounded look-ahead keeps memory flat on long inputs
            while len(pending) > 2 * workers:
                yield from pending.popleft().result()
        while pending:
            yield from pending.popleft().result()


# reporting

def _sort_key(column: str):
    def key(row: ScanRow):
        val = row.values[column]
        missing = val is None or math.isnan(val)
        return (missing, 0.0 if missing else -val, row.snp)
    return key


def rank_and_group(
    rows: Sequence[ScanRow],
    column: str = "abf",
    group_key: Callable[[ScanRow], str] | Mapping[str, str] | None = None,
) -> list[ScanRow]:
    """Rank rows by a log10 column, descending, ties broken by SNP id.

    NaN values sort last.  With ``group_key`` (a function of the row or a
    mapping from SNP id to group) only the top row of each group is kept,
    and the result is ordered by rank.  Rows whose group is None are dropped
    in grouped mode.

    Raises
    ------
    KeyError
        Unknown ranking column.
    """
    rows = list(rows)
    if rows and column not in rows[0].values:
        raise KeyError(f"unknown ranking column {column!r}; available: {sorted(rows[0].values)}")
    ranked = sorted(rows, key=_sort_key(column))
    if group_key is None:
        return ranked
    if isinstance(group_key, Mapping):
        mapping = group_key
        group_key = lambda r: mapping.get(r.snp)  # noqa: E731
    seen = set()
    top = []
    for r in ranked:
        g = group_key(r)
        if g is None or g in seen:
            continue
        seen.add(g)
        top.append(r)
    return top


def het_only_hits(rows: Iterable[ScanRow], threshold: float = HET_ONLY_THRESHOLD) -> list[ScanRow]:
    """Rows supported by a heterogeneous model but not by fixed effects.

    Selects rows with ``maxh >= threshold`` or ``cefn >= threshold`` (log10)
    while ``fix < threshold``.
    """
    out = []
    for r in rows:
        if "fix" not in r.values:
            raise KeyError("het-only filtering needs the fixed-effects column")
        het = [r.values[c] for c in ("maxh", "cefn") if c in r.values]
        if not het:
            raise KeyError("het-only filtering needs a maxh or cefn column")
        if any(h >= threshold for h in het) and r.values["fix"] < threshold:
            out.append(r)
    return out


__all__ = [
    "ScanConfig",
    "ScanRow",
    "scan",
    "rank_and_group",
    "het_only_hits",
    "SCAN_METHODS",
    "CHUNK_SIZE",
]
