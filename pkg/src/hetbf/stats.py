"""Per-subgroup regression summaries and frequentist meta-analysis statistics.

Each subgroup at a SNP is reduced to six sums, from which the least-squares
fit of ``y = mu + beta * g + e`` and every Bayes factor in this package follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from .errors import DataError, DegenerateFitError, MissingStatisticError
from ._special import two_sided_quantile

MONOMORPHIC_TOL = 1e-12
PERFECT_FIT_TOL = 1e-12


@dataclass(frozen=True)
class SubgroupSuffStats:
    """Sufficient statistics (n, sums and cross-products) of one subgroup."""

    n: int
    sum_y: float
    sum_g: float
    sum_yy: float
    sum_gg: float
    sum_yg: float

    def __post_init__(self):
        if self.n < 1:
            raise DataError(f"n must be >= 1, got {self.n}")
        vals = (self.sum_y, self.sum_g, self.sum_yy, self.sum_gg, self.sum_yg)
        if not all(math.isfinite(v) for v in vals):
            raise DataError("sufficient statistics must be finite")
        # Cauchy-Schwarz, with slack for rounding in the accumulated sums
        for sq, s, name in ((self.sum_yy, self.sum_y, "sum_yy"), (self.sum_gg, self.sum_g, "sum_gg")):
            floor = s * s / self.n
            if sq < floor - 1e-9 * max(abs(sq), abs(floor), 1.0):
                raise DataError(f"{name} is smaller than (sum)^2/n")
        if self.sum_g < 0 or self.sum_g > 2 * self.n * (1 + 1e-12):
            raise DataError("genotype sum outside [0, 2n]")

    def as_tuple(self) -> tuple:
        return (self.n, self.sum_y, self.sum_g, self.sum_yy, self.sum_gg, self.sum_yg)


@dataclass(frozen=True)
class SubgroupSummary:
    """Least-squares summary of one subgroup.

    ``d2`` is the squared standard error of ``beta_hat``; ``delta2`` that of the
    standardized effect ``b_hat``.  Quantities that cannot be recovered from the
    input (for instance the residual sums of squares of a summary built from
    an effect and its standard error) are NaN.  Monomorphic subgroups carry
    ``informative=False`` with infinite ``d2``/``delta2`` and a zero statistic.
    """

    n: int
    beta_hat: float
    se_beta: float
    sigma_hat2: float
    b_hat: float
    delta2: float
    d2: float
    t_stat: float
    rss0: float
    rss1: float
    informative: bool = True

    @property
    def has_standardized(self) -> bool:
        """True when ``b_hat`` and ``delta2`` are available (ES models)."""
        return not self.informative or (math.isfinite(self.b_hat) and math.isfinite(self.delta2))

    @property
    def has_rss(self) -> bool:
        return math.isfinite(self.rss0) and math.isfinite(self.rss1)

    @property
    def df(self) -> int:
        return self.n - 2


@dataclass(frozen=True)
class MetaStat:
    """Inverse-variance weighted average effect and its test statistic."""

    bar_hat: float
    se2: float
    t2: float


@dataclass(frozen=True)
class SnpRecord:
    """All subgroup data for one SNP.

    ``suffstats`` is filled when the record came from raw data or sufficient
    statistics; it is needed by the Laplace and quadrature methods.
    """

    snp: str
    subgroups: tuple[str, ...]
    summaries: tuple[SubgroupSummary, ...]
    suffstats: tuple[SubgroupSuffStats, ...] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.subgroups) != len(self.summaries):
            raise DataError("subgroup labels and summaries differ in length")
        if self.suffstats is not None and len(self.suffstats) != len(self.summaries):
            raise DataError("subgroup labels and sufficient statistics differ in length")
        if len(set(self.subgroups)) != len(self.subgroups):
            raise DataError(f"duplicate subgroup label for SNP {self.snp}")

    def restrict(self, keep: Sequence[int]) -> "SnpRecord":
        """Sub-record with only the subgroups at positions ``keep`` (in order)."""
        keep = list(keep)
        return SnpRecord(
            snp=self.snp,
            subgroups=tuple(self.subgroups[i] for i in keep),
            summaries=tuple(self.summaries[i] for i in keep),
            suffstats=None if self.suffstats is None else tuple(self.suffstats[i] for i in keep),
            meta=dict(self.meta),
        )


def suffstats_from_raw(y, g) -> SubgroupSuffStats:
    """Reduce phenotype and genotype vectors to the six sufficient statistics.

    Sums are accumulated with ``math.fsum`` so they are correctly rounded.
    """
    y = np.asarray(y, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if y.shape != g.shape:
        raise DataError(f"phenotype and genotype lengths differ ({y.size} vs {g.size})")
    if y.size < 3:
        raise DataError("at least 3 individuals are needed (n - 2 residual degrees of freedom)")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(g))):
        raise DataError("non-finite phenotype or genotype value")
    if np.any(g < 0) or np.any(g > 2):
        raise DataError("genotype codes must lie in [0, 2]")
    return SubgroupSuffStats(
        n=int(y.size),
        sum_y=math.fsum(y),
        sum_g=math.fsum(g),
        sum_yy=math.fsum(y * y),
        sum_gg=math.fsum(g * g),
        sum_yg=math.fsum(y * g),
    )


def summarize(s: SubgroupSuffStats) -> SubgroupSummary:
    """Ordinary least-squares summary of one subgroup from its sufficient statistics."""
    n = s.n
    if n < 3:
        raise DataError("summarize needs n >= 3")
    sxx = s.sum_gg - s.sum_g * s.sum_g / n
    syy = max(s.sum_yy - s.sum_y * s.sum_y / n, 0.0)
    sxy = s.sum_yg - s.sum_y * s.sum_g / n
    if sxx <= MONOMORPHIC_TOL * n:
        return _non_informative(n, rss0=syy)
    beta = sxy / sxx
    rss1 = max(syy - sxy * sxy / sxx, 0.0)
    if rss1 <= PERFECT_FIT_TOL * syy or syy == 0.0:
        raise DegenerateFitError("residual sum of squares is zero; the fit is perfect")
    sigma2 = rss1 / (n - 2)
    delta2 = 1.0 / sxx
    se = math.sqrt(sigma2 * delta2)
    sigma = math.sqrt(sigma2)
    return SubgroupSummary(
        n=n,
        beta_hat=beta,
        se_beta=se,
        sigma_hat2=sigma2,
        b_hat=beta / sigma,
        delta2=delta2,
        d2=se * se,
        t_stat=beta / se,
        rss0=syy,
        rss1=rss1,
    )


def _non_informative(n: int, rss0: float = math.nan, sigma_hat2: float = math.nan) -> SubgroupSummary:
    if math.isfinite(rss0) and math.isnan(sigma_hat2):
        sigma_hat2 = rss0 / (n - 2)
    return SubgroupSummary(
        n=n,
        beta_hat=0.0,
        se_beta=math.inf,
        sigma_hat2=sigma_hat2,
        b_hat=0.0,
        delta2=math.inf,
        d2=math.inf,
        t_stat=0.0,
        rss0=rss0,
        rss1=rss0,
        informative=False,
    )


def summary_from_effect_se(beta_hat: float, se_beta: float, n: int, sigma_hat: float | None = None) -> SubgroupSummary:
    """Summary from a published effect estimate and its standard error.

    Without ``sigma_hat`` only unstandardized (EE) models can use the result.
    """
    if not (math.isfinite(beta_hat) and se_beta > 0 and math.isfinite(se_beta)):
        raise DataError("beta_hat must be finite and se_beta positive")
    if n < 3:
        raise DataError("n must be >= 3")
    if sigma_hat is None:
        b_hat = delta2 = sigma2 = math.nan
    else:
        if not sigma_hat > 0:
            raise DataError("sigma_hat must be positive")
        b_hat = beta_hat / sigma_hat
        delta2 = (se_beta / sigma_hat) ** 2
        sigma2 = sigma_hat * sigma_hat
    return SubgroupSummary(
        n=int(n),
        beta_hat=float(beta_hat),
        se_beta=float(se_beta),
        sigma_hat2=sigma2,
        b_hat=b_hat,
        delta2=delta2,
        d2=float(se_beta) ** 2,
        t_stat=beta_hat / se_beta,
        rss0=math.nan,
        rss1=math.nan,
    )


def se_from_pvalue(beta_hat: float, p_two_sided: float, df: float | None = None) -> float:
    """Standard error implied by an effect estimate and its two-sided p-value."""
    if not 0.0 < p_two_sided < 1.0:
        raise DataError("p-value must lie strictly between 0 and 1")
    if beta_hat == 0 or not math.isfinite(beta_hat):
        raise DataError("beta_hat must be non-zero and finite")
    q = two_sided_quantile(p_two_sided, df)
    return abs(beta_hat) / q


def _informative(summaries: Sequence[SubgroupSummary]) -> list[SubgroupSummary]:
    inf = [s for s in summaries if s.informative]
    if not inf:
        raise DataError("no informative subgroup")
    return inf


def require_standardized(summaries: Sequence[SubgroupSummary]) -> None:
    if not all(s.has_standardized for s in summaries):
        raise MissingStatisticError(
            "standardized effects need sigma_hat; supply it or use an EE model"
        )


def _meta(est: np.ndarray, var: np.ndarray) -> MetaStat:
    w = 1.0 / var
    se2 = 1.0 / np.sum(w)
    bar = se2 * np.sum(w * est)
    return MetaStat(bar_hat=float(bar), se2=float(se2), t2=float(bar * bar / se2))


def meta_stat_es(summaries: Sequence[SubgroupSummary], phi: float) -> MetaStat:
    """Weighted average of standardized effects with weights ``1/(delta2 + phi^2)``."""
    require_standardized(summaries)
    inf = _informative(summaries)
    est = np.array([s.b_hat for s in inf])
    var = np.array([s.delta2 for s in inf]) + phi * phi
    return _meta(est, var)


def meta_stat_ee(summaries: Sequence[SubgroupSummary], psi: float) -> MetaStat:
    """Weighted average of unstandardized effects with weights ``1/(d2 + psi^2)``."""
    inf = _informative(summaries)
    est = np.array([s.beta_hat for s in inf])
    var = np.array([s.d2 for s in inf]) + psi * psi
    return _meta(est, var)


def weighted_z(summaries: Sequence[SubgroupSummary], scheme: str = "es") -> float:
    """Weighted Z-score ``sum(w T) / sqrt(sum(w^2))`` over informative subgroups."""
    inf = _informative(summaries)
    t = np.array([s.t_stat for s in inf])
    if scheme == "es":
        require_standardized(inf)
        w = 1.0 / np.sqrt([s.delta2 for s in inf])
    elif scheme == "ee":
        w = 1.0 / np.array([s.se_beta for s in inf])
    elif scheme == "sqrt_n":
        w = np.sqrt([float(s.n) for s in inf])
    else:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    return float(np.sum(w * t) / math.sqrt(np.sum(w * w)))


def maxh_chi2(summaries: Sequence[SubgroupSummary]) -> tuple[float, float]:
    """Sum of squared statistics and its chi-square tail probability."""
    inf = _informative(summaries)
    total = math.fsum(s.t_stat ** 2 for s in inf)
    return total, float(stats.chi2.sf(total, df=len(inf)))


def quantile_normal_transform(x) -> np.ndarray:
    """Rank-based inverse normal transform with average ranks for ties."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise DataError("quantile normal transform needs at least 2 values")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite value in quantile normal transform input")
    if np.all(x == x[0]):
        raise DataError("all values are tied; the transform has zero variance")
    r = stats.rankdata(x, method="average")
    return special.ndtri((r - 0.5) / x.size)
