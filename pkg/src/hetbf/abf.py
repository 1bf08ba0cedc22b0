"""Closed-form approximate Bayes factors and their grid averages.

Every ABF here has the same product structure: a single-study ABF for the
inverse-variance weighted mean effect, times one single-study ABF per
subgroup for its deviation from the mean.  The ES family works on
standardized effects (b_hat, delta2), the EE family on raw effects
(beta_hat, d2).  All values are natural logs until :attr:`BFResult.log10_bf`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DataError
from .priors import EffectPrior, Family, PriorGrid
from .stats import SubgroupSummary, require_standardized
from ._special import t_to_normal

LN10 = math.log(10.0)

METHODS = ("abf", "abf_corrected", "laplace", "cefn_quad", "oracle_quad", "cc_abf", "known_variance")


@dataclass(frozen=True)
class BFResult:
    """A Bayes factor on the natural-log scale with its provenance.

    Attributes
    ----------
    log_bf : float
        Natural log of the Bayes factor.
    method : str
        Computation route, one of :data:`METHODS`.
    prior : EffectPrior, PriorGrid or None
        The alternative model the factor refers to.
    flags : tuple of str
        Diagnostics such as fallbacks or tolerance warnings.
    rel_error : float
        Estimated relative error of the Bayes factor (quadrature methods).
    """

    log_bf: float
    method: str
    prior: object = None
    flags: tuple[str, ...] = ()
    rel_error: float = 0.0
    components: tuple[float, ...] | None = field(default=None, compare=False, repr=False)

    @property
    def log10_bf(self) -> float:
        return self.log_bf / LN10

    @property
    def bf(self) -> float:
        return math.exp(self.log_bf)


# Scalar building block

def abf_single(t2: float, se2: float, prior_var: float) -> float:
    """Log ABF of one normal estimate with squared statistic ``t2``.

    ``0.5*log(se2/(se2+V)) + 0.5*t2*V/(se2+V)`` for prior variance ``V``.
    """
    if t2 < 0 or se2 <= 0 or prior_var < 0:
        raise ValueError("abf_single needs t2 >= 0, se2 > 0 and prior_var >= 0")
    if prior_var == 0 or math.isinf(se2):
        return 0.0
    return -0.5 * math.log1p(prior_var / se2) + 0.5 * t2 * prior_var / (se2 + prior_var)


def _abf_single_arr(t2, se2, pv):
    with np.errstate(invalid="ignore", divide="ignore"):
        return -0.5 * np.log1p(pv / se2) + 0.5 * t2 * pv / (se2 + pv)


# Array core shared by the scalar API and the batch scan path

def log_abf_arrays(x, v, het_var, mean_var):
    """Log ABF for arrays of estimates.

    Parameters
    ----------
    x : ndarray, shape (..., S)
        Effect estimates (``b_hat`` or ``beta_hat``).
    v : ndarray, shape (..., S)
        Their squared standard errors.  Non-finite entries mark subgroups
        without data; they contribute exactly zero.
    het_var : float or ndarray broadcastable to (..., S)
        phi^2 or psi^2.
    mean_var : float or ndarray broadcastable to x.shape[:-1]
        omega^2 or w^2.

    Returns
    -------
    ndarray, shape x.shape[:-1]
        NaN where no subgroup is informative.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    het_var = np.asarray(het_var, dtype=float)
    mean_var = np.asarray(mean_var, dtype=float)
    mask = np.isfinite(v) & (v > 0) & np.isfinite(x)
    v_safe = np.where(mask, v, 1.0)
    x_safe = np.where(mask, x, 0.0)
    tot = v_safe + het_var
    w = np.where(mask, 1.0 / tot, 0.0)
    sw = np.sum(w, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        se2 = 1.0 / sw
        bar = se2 * np.sum(w * x_safe, axis=-1)
        t2_meta = bar * bar / se2
    meta = np.where(mean_var > 0, _abf_single_arr(t2_meta, se2, mean_var), 0.0)
    per = np.where(
        mask & (het_var > 0),
        _abf_single_arr(x_safe * x_safe / v_safe, v_safe, het_var),
        0.0,
    )
    out = meta + np.sum(per, axis=-1)
    return np.where(sw > 0, out, np.nan)


def corrected_estimates(x, v, n):
    """Estimates with each statistic replaced by its t(n-2) to normal quantile.

    Returns ``sqrt(v) * q(x / sqrt(v))`` so that the corrected statistic keeps
    its sign and the standard error is unchanged.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    mask = np.isfinite(v) & (v > 0) & np.isfinite(x)
    if np.any(mask & (n - 2 <= 2)):
        raise DataError("the small-sample correction needs n - 2 > 2 in every informative subgroup")
    sd = np.sqrt(np.where(mask, v, 1.0))
    t = np.where(mask, x, 0.0) / sd
    q = t_to_normal(t, np.where(mask, n - 2.0, 10.0))
    return np.where(mask, sd * q, x)


# Summary-level API

def _arrays(summaries: Sequence[SubgroupSummary], family: Family):
    if not any(s.informative for s in summaries):
        raise DataError("no informative subgroup")
    if family.standardized:
        require_standardized(summaries)
        x = [s.b_hat if s.informative else 0.0 for s in summaries]
        v = [s.delta2 if s.informative else math.inf for s in summaries]
    else:
        x = [s.beta_hat if s.informative else 0.0 for s in summaries]
        v = [s.d2 if s.informative else math.inf for s in summaries]
    n = [s.n for s in summaries]
    return np.array(x, dtype=float), np.array(v, dtype=float), np.array(n, dtype=float)


def _check_sd(*vals):
    for val in vals:
        arr = np.asarray(val, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("prior standard deviations must be finite and >= 0")


def _abf(summaries, family, het_sd, mean_sd, corrected, method, prior):
    fam = Family.parse(family)
    _check_sd(het_sd, mean_sd)
    x, v, n = _arrays(summaries, fam)
    if corrected:
        x = corrected_estimates(x, v, n)
    het_var = np.asarray(het_sd, dtype=float) ** 2
    if het_var.ndim and het_var.shape != x.shape:
        raise ValueError("per-subgroup het_sd must have one entry per subgroup")
    val = float(log_abf_arrays(x, v, het_var, float(mean_sd) ** 2))
    return BFResult(val, method, prior)


def abf_es(summaries: Sequence[SubgroupSummary], phi: float, omega: float, *, corrected: bool = False) -> BFResult:
    """ABF for exchangeable standardized effects ``b_s ~ N(b_bar, phi^2)``, ``b_bar ~ N(0, omega^2)``."""
    prior = EffectPrior(Family.ES, float(phi), float(omega), allow_null=True) if np.ndim(phi) == 0 else None
    method = "abf_corrected" if corrected else "abf"
    return _abf(summaries, Family.ES, phi, omega, corrected, method, prior)


def abf_ee(summaries: Sequence[SubgroupSummary], psi: float, w: float, *, corrected: bool = False) -> BFResult:
    """ABF for exchangeable unstandardized effects ``beta_s ~ N(beta_bar, psi^2)``, ``beta_bar ~ N(0, w^2)``."""
    prior = EffectPrior(Family.EE, float(psi), float(w), allow_null=True) if np.ndim(psi) == 0 else None
    method = "abf_corrected" if corrected else "abf"
    return _abf(summaries, Family.EE, psi, w, corrected, method, prior)


def abf_fix(summaries, omega: float, family="ES", *, corrected: bool = False) -> BFResult:
    """Fixed-effects ABF: no heterogeneity, shared mean effect with sd ``omega``."""
    fam = Family.parse(family).base
    fn = abf_es if fam is Family.ES else abf_ee
    return fn(summaries, 0.0, omega, corrected=corrected)


def abf_maxh(summaries, phi, family="ES", *, corrected: bool = False) -> BFResult:
    """Maximum-heterogeneity ABF: independent effects with sd ``phi`` and zero mean.

    ``phi`` may be a scalar or one value per subgroup.  The result is the sum
    of per-subgroup :func:`abf_single` log values.
    """
    fam = Family.parse(family).base
    _check_sd(phi)
    x, v, n = _arrays(summaries, fam)
    if corrected:
        x = corrected_estimates(x, v, n)
    phis = np.broadcast_to(np.asarray(phi, dtype=float), x.shape)
    total = 0.0
    for xs, vs, ps in zip(x, v, phis):
        if math.isfinite(vs):
            total += abf_single(xs * xs / vs, vs, ps * ps)
    prior = EffectPrior(fam, float(phi), 0.0, allow_null=True) if np.ndim(phi) == 0 else None
    return BFResult(total, "abf_corrected" if corrected else "abf", prior)


def abf_corrected(summaries, het_sd: float, mean_sd: float, family="ES") -> BFResult:
    """ABF after mapping each statistic through the t(n-2) to normal quantile transform."""
    fam = Family.parse(family).base
    fn = abf_es if fam is Family.ES else abf_ee
    return fn(summaries, het_sd, mean_sd, corrected=True)


def abf_prior(summaries, prior: EffectPrior, *, corrected: bool = False) -> BFResult:
    """ABF for an ES or EE :class:`EffectPrior`."""
    if prior.family.is_cefn:
        raise ValueError("CEFN priors are handled by hetbf.cefn")
    fn = abf_es if prior.family is Family.ES else abf_ee
    res = fn(summaries, prior.het_sd, prior.mean_sd, corrected=corrected)
    return BFResult(res.log_bf, res.method, prior)


def abf_average(results, weights: Sequence[float] | None = None, *, method: str | None = None, prior=None) -> BFResult:
    """Prior-weighted average of Bayes factors, computed by log-sum-exp.

    ``results`` is either a sequence of ``(log_bf, weight)`` pairs, or a
    sequence of log values / :class:`BFResult` objects with ``weights`` given
    separately.
    """
    items = list(results)
    if not items:
        raise ValueError("cannot average an empty list of Bayes factors")
    if weights is None:
        logs = [float(a.log_bf if isinstance(a, BFResult) else a) for a, _ in items]
        ws = [float(b) for _, b in items]
    else:
        logs = [float(a.log_bf if isinstance(a, BFResult) else a) for a in items]
        ws = [float(b) for b in weights]
    if len(ws) != len(logs):
        raise ValueError("one weight per Bayes factor is required")
    ws = np.asarray(ws)
    if np.any(~(ws > 0)):
        raise ValueError("weights must be positive")
    if abs(math.fsum(ws) - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    logs = np.asarray(logs)
    if len(logs) == 1:
        val = float(logs[0])
    else:
        val = float(logsumexp(logs, b=ws))
        # rounding can push the average a hair outside the component range
        val = min(max(val, float(logs.min())), float(logs.max()))
    if method is None:
        kinds = {a.method for a in items if isinstance(a, BFResult)} if weights is not None else set()
        method = kinds.pop() if len(kinds) == 1 else "abf"
    return BFResult(val, method, prior, components=tuple(logs.tolist()))


def abf_grid(summaries, grid: PriorGrid, *, corrected: bool = False) -> BFResult:
    """Grid-averaged ABF over ES/EE grid points."""
    comps = [abf_prior(summaries, p, corrected=corrected) for p in grid.priors]
    return abf_average(comps, grid.weights, method=comps[0].method, prior=grid)


# Batch path used by the scan engine

def grid_arrays(grid: PriorGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(het_var, mean_var, log_weight) arrays for an ES/EE grid."""
    if any(p.family.is_cefn for p in grid.priors):
        raise ValueError("batch ABF supports ES and EE grids only")
    het = np.array([p.het_sd for p in grid.priors], dtype=float) ** 2
    mean = np.array([p.mean_sd for p in grid.priors], dtype=float) ** 2
    return het, mean, grid.log_weights


def log_abf_grid_batch(x, v, het_var, mean_var, log_w):
    """Grid-averaged log ABF for many SNPs at once.

    ``x`` and ``v`` have shape (N, S); the grid arrays have shape (G,).
    Returns shape (N,) averaged values and the (N, G) component matrix.
    """
    x = np.asarray(x, dtype=float)[:, None, :]
    v = np.asarray(v, dtype=float)[:, None, :]
    comps = log_abf_arrays(x, v, np.asarray(het_var)[None, :, None], np.asarray(mean_var)[None, :])
    if comps.shape[1] == 1:
        return comps[:, 0], comps
    avg = logsumexp(comps + np.asarray(log_w)[None, :], axis=1)
    avg = np.clip(avg, comps.min(axis=1), comps.max(axis=1))
    return avg, comps
