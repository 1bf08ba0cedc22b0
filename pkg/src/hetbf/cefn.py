"""Bayes factors under the curved exponential family normal (CEFN) prior.

Under CEFN the subgroup effects are ``N(b_bar, k^2 b_bar^2)`` so heterogeneity
grows with the mean effect.  The average effect cannot be integrated in
closed form; after the precisions are handled per subgroup the Bayes factor
is a one-dimensional integral over ``b_bar`` evaluated by adaptive quadrature.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .abf import BFResult, _arrays, corrected_estimates
from .errors import QuadratureError
from .priors import EffectPrior, Family
from .quadrature import integrate_log
from .stats import SubgroupSummary

PREFACTORS = ("rss", "normal")


def _prefactor(t2, n, kind):
    if kind == "rss":
        # (RSS0 / RSS1)^(n/2) written through the t statistic
        return float(np.sum(0.5 * n * np.log1p(t2 / (n - 2.0))))
    if kind == "normal":
        return float(np.sum(0.5 * t2))
    raise ValueError(f"prefactor must be one of {PREFACTORS}")


def log_cefn_integrand(x, v, k: float, mean_sd: float, literal_k: bool = False):
    """Return ``f(bar)``: the log integrand over the average effect.

    ``f(bar) = log N(bar; 0, mean_sd^2) + sum_s [0.5 log(v_s/V_s) - 0.5 (x_s - bar)^2 / V_s]``
    with ``V_s = v_s + k^2 bar^2`` (or ``k bar^2`` when ``literal_k``).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    coef = k if literal_k else k * k
    mv = mean_sd * mean_sd
    norm = -0.5 * math.log(2.0 * math.pi * mv)

    def f(bar):
        bar = np.asarray(bar, dtype=float)[..., None]
        V = v + coef * bar * bar
        terms = 0.5 * np.log(v / V) - 0.5 * (x - bar) ** 2 / V
        b = bar[..., 0]
        return norm - 0.5 * b * b / mv + np.sum(terms, axis=-1)

    return f


def abf_cefn(
    summaries: Sequence[SubgroupSummary],
    k: float,
    mean_sd: float,
    family="ES",
    *,
    corrected: bool = False,
    prefactor: str = "rss",
    literal_k: bool = False,
    rel_tol: float = 1e-8,
) -> BFResult:
    """Approximate Bayes factor under a CEFN prior.

    Parameters
    ----------
    summaries : sequence of SubgroupSummary
        Per-subgroup summaries; ES needs standardized effects.
    k : float
        CEFN coefficient; subgroup effects have sd ``|k b_bar|``.
    mean_sd : float
        Prior sd of the average effect (omega or w).
    family : {"ES", "EE"}
        Standardized or unstandardized effects.
    corrected : bool
        Apply the t-to-normal quantile map to each statistic first.  The
        normal prefactor is then used, since the mapped statistics are
        already on the normal scale.
    prefactor : {"rss", "normal"}
        Per-subgroup factor multiplying the integral: ``(1 + T^2/(n-2))^(n/2)``
        (the residual-sum-of-squares ratio) or ``exp(T^2 / 2)``.  Only the
        latter makes ``k = 0`` coincide with the fixed-effects ABF.
    literal_k : bool
        Use heterogeneity variance ``k b_bar^2`` instead of ``k^2 b_bar^2``.
    rel_tol : float
        Relative tolerance of the quadrature.

    Raises
    ------
    QuadratureError
        If the tolerance is not reached; carries the achieved error.
    """
    if not (k >= 0 and math.isfinite(k)):
        raise ValueError("k must be finite and >= 0")
    if not (mean_sd >= 0 and math.isfinite(mean_sd)):
        raise ValueError("mean_sd must be finite and >= 0")
    fam = Family.parse(family).base
    cefn_fam = Family.CEFN_ES if fam is Family.ES else Family.CEFN_EE
    prior = EffectPrior(cefn_fam, None, float(mean_sd), float(k), allow_null=True)
    x, v, n = _arrays(summaries, fam)
    keep = np.isfinite(v)
    x, v, n = x[keep], v[keep], n[keep]
    if corrected:
        x = corrected_estimates(x, v, n)
        prefactor = "normal"
    t2 = x * x / v
    method = "abf_corrected" if corrected else "cefn_quad"
    if mean_sd == 0.0:
        return BFResult(0.0, method, prior)
    pref = _prefactor(t2, n, prefactor)
    f = log_cefn_integrand(x, v, k, mean_sd, literal_k)
    zeta2 = 1.0 / np.sum(1.0 / v)
    center = zeta2 * np.sum(x / v)
    scale = 1.0 / math.sqrt(1.0 / mean_sd ** 2 + 1.0 / zeta2)
    res = integrate_log(f, breakpoints=[0.0, float(center), *x.tolist()], scale=scale, rel_tol=rel_tol)
    # the integral includes exp(-T^2/2) per subgroup; the prefactor restores it
    return BFResult(pref + res.log_value, method, prior, rel_error=res.rel_error)


def abf_cefn_prior(summaries, prior: EffectPrior, **kwargs) -> BFResult:
    """:func:`abf_cefn` for a CEFN :class:`EffectPrior`."""
    if not prior.family.is_cefn:
        raise ValueError("expected a CEFN prior")
    return abf_cefn(summaries, prior.cefn_k, prior.mean_sd, prior.family.base, **kwargs)


__all__ = ["abf_cefn", "abf_cefn_prior", "log_cefn_integrand", "PREFACTORS", "QuadratureError"]
