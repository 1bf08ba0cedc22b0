"""Alternative-model hyper-parameters, weighted grids of them, and CEFN helpers."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import special


class Family(str, Enum):
    """Prior family for subgroup effects."""

    ES = "ES"
    EE = "EE"
    CEFN_ES = "CEFN_ES"
    CEFN_EE = "CEFN_EE"

    @property
    def is_cefn(self) -> bool:
        return self in (Family.CEFN_ES, Family.CEFN_EE)

    @property
    def standardized(self) -> bool:
        """True for families defined on standardized effects ``beta / sigma``."""
        return self in (Family.ES, Family.CEFN_ES)

    @property
    def base(self) -> "Family":
        """ES or EE, stripping the CEFN qualifier."""
        return Family.ES if self.standardized else Family.EE

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown prior family {value!r}") from None


@dataclass(frozen=True)
class EffectPrior:
    """One alternative model.

    ``het_sd`` is phi (ES) or psi (EE), ``mean_sd`` is omega (ES) or w (EE).
    CEFN families tie the heterogeneity to the mean through ``cefn_k`` and
    leave ``het_sd`` unset.  Use :meth:`null` for the degenerate prior with
    no effect at all.
    """

    family: Family
    het_sd: float | None
    mean_sd: float
    cefn_k: float | None = None
    allow_null: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (math.isfinite(self.mean_sd) and self.mean_sd >= 0):
            raise ValueError("mean_sd must be finite and >= 0")
        if self.family.is_cefn:
            if self.het_sd not in (None, 0.0):
                raise ValueError("CEFN priors take cefn_k, not het_sd")
            if self.cefn_k is None or not (math.isfinite(self.cefn_k) and self.cefn_k >= 0):
                raise ValueError("CEFN priors need a finite cefn_k >= 0")
            object.__setattr__(self, "het_sd", None)
        else:
            if self.cefn_k is not None:
                raise ValueError("cefn_k applies only to CEFN families")
            if self.het_sd is None or not (math.isfinite(self.het_sd) and self.het_sd >= 0):
                raise ValueError("het_sd must be finite and >= 0")
        if self.is_null and not self.allow_null:
            raise ValueError("all prior sds are zero; use EffectPrior.null() for the null model")

    @classmethod
    def null(cls, family="ES") -> "EffectPrior":
        fam = Family.parse(family)
        if fam.is_cefn:
            return cls(fam, None, 0.0, 0.0, allow_null=True)
        return cls(fam, 0.0, 0.0, allow_null=True)

    @property
    def is_null(self) -> bool:
        return self.mean_sd == 0.0 and (self.family.is_cefn or self.het_sd == 0.0)

    @property
    def phi(self) -> float:
        """Heterogeneity sd; zero for CEFN where it depends on the mean."""
        return 0.0 if self.het_sd is None else self.het_sd


@dataclass(frozen=True)
class PriorGrid:
    """Weighted collection of alternative models."""

    points: tuple[tuple[EffectPrior, float], ...]

    def __post_init__(self):
        pts = tuple((p, float(w)) for p, w in self.points)
        if not pts:
            raise ValueError("a prior grid needs at least one point")
        ws = np.array([w for _, w in pts])
        if np.any(~np.isfinite(ws)) or np.any(ws <= 0):
            raise ValueError("grid weights must be positive")
        if abs(math.fsum(ws) - 1.0) > 1e-12:
            raise ValueError("grid weights must sum to 1; use PriorGrid.from_priors to normalize")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_priors(cls, priors: Sequence[EffectPrior], weights: Sequence[float] | None = None) -> "PriorGrid":
        priors = list(priors)
        if not priors:
            raise ValueError("a prior grid needs at least one point")
        if weights is None:
            weights = np.ones(len(priors))
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(priors),) or np.any(w <= 0) or np.any(~np.isfinite(w)):
            raise ValueError("weights must be positive and match the priors")
        w = w / math.fsum(w)
        return cls(tuple(zip(priors, w.tolist())))

    @classmethod
    def single(cls, prior: EffectPrior) -> "PriorGrid":
        return cls(((prior, 1.0),))

    @property
    def priors(self) -> list[EffectPrior]:
        return [p for p, _ in self.points]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.points])

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def families(self) -> set[Family]:
        return {p.family for p in self.priors}

    def subset(self, predicate) -> "PriorGrid":
        """Renormalized sub-grid of points whose prior satisfies ``predicate``."""
        kept = [(p, w) for p, w in self.points if predicate(p)]
        if not kept:
            raise ValueError("no grid point satisfies the selection")
        return PriorGrid.from_priors([p for p, _ in kept], [w for _, w in kept])


_INF_TOKENS = {"inf", "infinity", "+inf", "+infinity"}


def parse_ratio(value) -> float:
    """Parse a heterogeneity ratio; accepts the usual spellings of infinity."""
    if isinstance(value, str):
        v = value.strip()
        if v.lower() in _INF_TOKENS:
            return math.inf
        if "/" in v:
            num, den = v.split("/", 1)
            return float(num) / float(den)
        return float(v)
    return float(value)


def split_marginal(m: float, ratio: float) -> tuple[float, float]:
    """(het_sd, mean_sd) with ``het_sd^2 + mean_sd^2 = m^2`` and ratio ``het^2/mean^2``."""
    if math.isinf(ratio):
        return m, 0.0
    if ratio == 0:
        return 0.0, m
    het = m * math.sqrt(ratio / (1.0 + ratio))
    mean = m * math.sqrt(1.0 / (1.0 + ratio))
    return het, mean


def grid_from_marginal_heterogeneity(
    marginals: Iterable[float],
    ratios: Iterable,
    weights: Sequence[float] | None = None,
    family="ES",
) -> PriorGrid:
    """Cartesian grid over marginal effect sd and heterogeneity ratio.

    Points are ordered marginal-major.  ``weights``, when given, has one entry
    per grid point in that order; otherwise all points are equally likely.
    """
    fam = Family.parse(family)
    if fam.is_cefn:
        raise ValueError("use cefn_grid for CEFN families")
    marginals = [float(m) for m in marginals]
    ratios = [parse_ratio(r) for r in ratios]
    if not marginals or not ratios:
        raise ValueError("marginals and ratios must be non-empty")
    if any(not (m > 0 and math.isfinite(m)) for m in marginals):
        raise ValueError("marginal sds must be positive and finite")
    if any(not r >= 0 for r in ratios):
        raise ValueError("ratios must be >= 0 or infinite")
    priors = []
    for m in marginals:
        for r in ratios:
            het, mean = split_marginal(m, r)
            priors.append(EffectPrior(fam, het, mean))
    return PriorGrid.from_priors(priors, weights)


def cefn_grid(marginals: Iterable[float], k: float, family="CEFN_EE", weights=None) -> PriorGrid:
    """CEFN grid whose overall effect variance ``(1 + k^2) mean_sd^2`` equals each marginal^2."""
    fam = Family.parse(family)
    if not fam.is_cefn:
        raise ValueError("cefn_grid needs a CEFN family")
    priors = [EffectPrior(fam, None, float(m) / math.sqrt(1.0 + k * k), float(k)) for m in marginals]
    return PriorGrid.from_priors(priors, weights)


def cefn_sign_prob(k: float) -> float:
    """Prior probability that a subgroup effect has the opposite sign to the mean."""
    if k < 0 or not math.isfinite(k):
        raise ValueError("k must be finite and >= 0")
    if k == 0:
        return 0.0
    return float(special.ndtr(-1.0 / k))


def k_from_sign_prob(p: float) -> float:
    """Inverse of :func:`cefn_sign_prob` on [0, 1/2)."""
    if not 0 <= p < 0.5:
        raise ValueError("sign-flip probability must lie in [0, 0.5)")
    if p == 0:
        return 0.0
    return float(-1.0 / special.ndtri(p))


def implicit_prior_scale(kind: str, K: float, se2: float) -> float:
    """Prior variance of the implicit p-value priors.

    ``fixed`` gives ``omega_p^2 = K^2 se2`` (omega_p = K zeta_p); ``maxh`` gives
    ``phi_s^2 = K se2``.
    """
    if not (K > 0 and se2 > 0):
        raise ValueError("K and se2 must be positive")
    if kind == "fixed":
        return K * K * se2
    if kind == "maxh":
        return K * se2
    raise ValueError(f"unknown implicit prior kind {kind!r}")


# Shipped default grids
ES_EQTL_MARGINALS = (0.1, 0.2, 0.4, 0.8, 1.6)
ES_EQTL_RATIOS = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, math.inf)
LIPIDS_MARGINALS = (0.1, 0.2, 0.4, 0.6, 0.8)
LIPIDS_CEFN_K = 0.326
RECOMBINATION_MARGINALS = (5.0, 10.0, 20.0, 40.0)
RECOMBINATION_RATIOS = (0.0, 0.5, 1.0, 2.0, math.inf)


def default_es_grid() -> PriorGrid:
    return grid_from_marginal_heterogeneity(ES_EQTL_MARGINALS, ES_EQTL_RATIOS, family="ES")


def recombination_ee_grid() -> PriorGrid:
    return grid_from_marginal_heterogeneity(RECOMBINATION_MARGINALS, RECOMBINATION_RATIOS, family="EE")


def lipids_grids(k: float = LIPIDS_CEFN_K) -> dict[str, PriorGrid]:
    """Fixed-effects, max-heterogeneity and CEFN EE grids over the lipids marginal set."""
    return {
        "fix": grid_from_marginal_heterogeneity(LIPIDS_MARGINALS, [0.0], family="EE"),
        "maxh": grid_from_marginal_heterogeneity(LIPIDS_MARGINALS, [math.inf], family="EE"),
        "cefn": cefn_grid(LIPIDS_MARGINALS, k, family="CEFN_EE"),
    }


# Grid files and shorthand

GRID_HEADER = ("family", "het_sd", "mean_sd", "cefn_k", "weight")


def _fmt(x) -> str:
    return "NA" if x is None else repr(float(x))


def write_grid(grid: PriorGrid) -> str:
    buf = io.StringIO()
    buf.write("\t".join(GRID_HEADER) + "\n")
    for p, w in grid:
        buf.write("\t".join([p.family.value, _fmt(p.het_sd), _fmt(p.mean_sd), _fmt(p.cefn_k), repr(w)]) + "\n")
    return buf.getvalue()


def read_grid(text: str) -> PriorGrid:
    """Parse a grid TSV (header ``family het_sd mean_sd cefn_k weight``)."""
    rows = [r for r in csv.reader(io.StringIO(text), delimiter="\t") if r and any(c.strip() for c in r)]
    if not rows or tuple(c.strip() for c in rows[0]) != GRID_HEADER:
        raise ValueError("grid file header must be: " + " ".join(GRID_HEADER))
    priors, weights = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(GRID_HEADER):
            raise ValueError(f"line {lineno}: expected {len(GRID_HEADER)} fields, got {len(row)}")
        fam, het, mean, k, w = (c.strip() for c in row)

        def num(v):
            return None if v.upper() in ("NA", "") else float(v)

        try:
            priors.append(EffectPrior(Family.parse(fam), num(het), float(mean), num(k)))
            weights.append(float(w))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return PriorGrid.from_priors(priors, weights)


def parse_grid_shorthand(text: str, family="ES", cefn_k: float | None = None) -> PriorGrid:
    """Parse ``"m1,m2,...:r1,r2,..."``; for CEFN families only the marginals are read."""
    fam = Family.parse(family)
    left, _, right = text.partition(":")
    marginals = [float(x) for x in left.split(",") if x.strip()]
    if fam.is_cefn:
        if cefn_k is None:
            raise ValueError("CEFN grids need cefn_k")
        return cefn_grid(marginals, cefn_k, family=fam)
    if not right:
        raise ValueError("grid shorthand must look like 'm1,m2:r1,r2'")
    ratios = [parse_ratio(x) for x in right.split(",") if x.strip()]
    return grid_from_marginal_heterogeneity(marginals, ratios, family=fam)
