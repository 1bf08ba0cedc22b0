"""One entry point for every Bayes factor route: choose by prior family and method."""

from __future__ import annotations

from typing import Sequence

from .abf import BFResult, abf_average, abf_prior
from .casecontrol import CCSubgroupSummary, abf_cc
from .cefn import abf_cefn_prior
from .laplace import bfhat
from .oracle import bf_quad
from .priors import EffectPrior, PriorGrid
from .stats import SnpRecord

BF_METHODS = ("abf", "corrected", "laplace", "oracle")


def _summaries(data):
    if isinstance(data, SnpRecord):
        return list(data.summaries)
    return list(data)


def bf(data, prior: EffectPrior, method: str = "abf", **options) -> BFResult:
    """Bayes factor of one alternative model against the global null.

    Parameters
    ----------
    data : SnpRecord or sequence of summaries
        Subgroup summaries (linear or case-control).
    prior : EffectPrior
    method : {"abf", "corrected", "laplace", "oracle"}
        Analytic ABF, ABF with the small-sample correction, Laplace
        approximation over the precisions, or the quadrature oracle.
        CEFN priors are always evaluated by one-dimensional quadrature;
        ``corrected`` applies the correction inside it.
    options
        Passed to the CEFN or oracle routine (for instance ``prefactor`` or
        ``rel_tol``).
    """
    if method not in BF_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {BF_METHODS}")
    sums = _summaries(data)
    if sums and isinstance(sums[0], CCSubgroupSummary):
        if prior.family.is_cefn or prior.family.standardized:
            raise ValueError("case-control data support EE priors only")
        if method not in ("abf", "corrected"):
            raise ValueError("case-control data support the analytic ABF only")
        return abf_cc(sums, prior.het_sd, prior.mean_sd)
    if method == "oracle":
        return bf_quad(sums, prior, **options)
    if prior.family.is_cefn:
        if method == "laplace":
            raise ValueError("the Laplace route is not defined for CEFN priors")
        return abf_cefn_prior(sums, prior, corrected=(method == "corrected"), **options)
    if method == "laplace":
        return bfhat(sums, prior)
    return abf_prior(sums, prior, corrected=(method == "corrected"))


def bf_grid(data, grid: PriorGrid | EffectPrior, method: str = "abf", **options) -> BFResult:
    """Prior-weighted average Bayes factor over a grid."""
    if isinstance(grid, EffectPrior):
        return bf(data, grid, method, **options)
    comps = [bf(data, p, method, **options) for p in grid.priors]
    flags = tuple(sorted({f for c in comps for f in c.flags}))
    res = abf_average(comps, grid.weights, method=comps[0].method, prior=grid)
    rel = max(c.rel_error for c in comps)
    return BFResult(res.log_bf, res.method, grid, flags, rel, res.components)


def bf_components(data, grid: PriorGrid, method: str = "abf", **options) -> list[BFResult]:
    """Per-point Bayes factors of a grid, in grid order."""
    return [bf(data, p, method, **options) for p in grid.priors]


__all__: Sequence[str] = ("bf", "bf_grid", "bf_components", "BF_METHODS")
