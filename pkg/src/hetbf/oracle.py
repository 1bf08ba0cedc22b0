"""Reference Bayes factors by numerical integration, and data simulation.

The quadrature oracle conditions on the average effect (b_bar or beta_bar).
Given it, the subgroups are independent, and each contributes a
one-dimensional integral over its precision ``tau_s`` that is evaluated in
``u = log tau`` with composite Gauss-Legendre rules.  The outer integral over
the average effect is adaptive Gauss-Kronrod on the real line.  No step uses
the closed forms that the approximations are built from, so agreement between
the two is a genuine check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special
from scipy.special import logsumexp

from .abf import BFResult, log_abf_arrays, corrected_estimates
from .errors import DataError, DegenerateFitError, QuadratureError
from .laplace import laplace_inputs, log_k_h0, log_k_ha, LaplaceInputs
from .priors import EffectPrior, Family, implicit_prior_scale
from .quadrature import gauss_legendre, integrate_log
from .stats import (
    SnpRecord,
    SubgroupSuffStats,
    SubgroupSummary,
    _non_informative,
    summarize,
    suffstats_from_raw,
)

DEFAULT_REL_TOL = 1e-8
_TAIL_NATS = 45.0
_GL_POINTS = 20
_MAX_PANELS = 512


# Inner precision integrals

def _envelope_bracket(n, rss, level):
    """Interval of u where ``(n/2) u - exp(u) rss / 2 >= level`` (vectorized).

    The function is concave with maximum at ``log(n / rss)``; the left end
    lies above ``2 level / n`` because the function is below ``(n/2) u``.
    """
    half = 0.5 * n
    u_mode = np.log(n / rss)

    def G(u):
        return half * u - 0.5 * np.exp(u) * rss

    lo = np.minimum(2.0 * level / n, u_mode) - 1.0
    hi_a = u_mode.copy()
    hi_b = u_mode + 1.0
    while np.any(G(hi_b) >= level):
        hi_b = np.where(G(hi_b) >= level, hi_b + 2.0 * (hi_b - u_mode), hi_b)
    lo_a, lo_b = lo, u_mode.copy()
    for _ in range(60):
        mid = 0.5 * (lo_a + lo_b)
        above = G(mid) >= level
        lo_b = np.where(above, mid, lo_b)
        lo_a = np.where(above, lo_a, mid)
        mid = 0.5 * (hi_a + hi_b)
        above = G(mid) >= level
        hi_a = np.where(above, mid, hi_a)
        hi_b = np.where(above, hi_b, mid)
    return lo_a, hi_b


def _log_integral_u(g, n, rss_env, rows, tol):
    """``log int exp(g(u)) du`` for ``rows`` independent integrands.

    ``g(u, idx)`` evaluates rows ``idx`` at points ``u`` of shape (len(idx), K).
    Each integrand must satisfy ``g(u) <= (n/2) u - exp(u) rss_env / 2``.
    That envelope gives a finite interval outside which the integrand is
    negligible; inside it the mode is located by a scan plus golden-section
    search and the integration range is where ``g`` is within 45 nats of it.
    """
    n = np.broadcast_to(np.asarray(n, dtype=float), (rows,))
    rss = np.broadcast_to(np.asarray(rss_env, dtype=float), (rows,))
    idx_all = np.arange(rows)
    u_env = np.log(n / rss)
    g_env = g(u_env[:, None], idx_all)[:, 0]
    a0, b0 = _envelope_bracket(n, rss, g_env - _TAIL_NATS)

    # coarse scan, then golden-section refinement around the best cell
    grid = np.linspace(0.0, 1.0, 33)
    scan = a0[:, None] + (b0 - a0)[:, None] * grid[None, :]
    j = np.argmax(g(scan, idx_all), axis=1)
    lo = scan[idx_all, np.maximum(j - 1, 0)]
    hi = scan[idx_all, np.minimum(j + 1, grid.size - 1)]
    ratio = 0.5 * (math.sqrt(5.0) - 1.0)
    c = hi - ratio * (hi - lo)
    d = lo + ratio * (hi - lo)
    gc = g(c[:, None], idx_all)[:, 0]
    gd = g(d[:, None], idx_all)[:, 0]
    for _ in range(30):
        left = gc >= gd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        # the surviving interior point is reused; one new evaluation per step
        new_pt = np.where(left, hi - ratio * (hi - lo), lo + ratio * (hi - lo))
        g_new = g(new_pt[:, None], idx_all)[:, 0]
        c, d, gc, gd = (
            np.where(left, new_pt, d),
            np.where(left, c, new_pt),
            np.where(left, g_new, gd),
            np.where(left, gc, g_new),
        )
    u_star = np.where(gc >= gd, c, d)
    g_max = np.maximum(np.maximum(gc, gd), g_env)
    level = g_max - _TAIL_NATS

    # walk outward from the mode in growing steps, then bisect towards the
    # level; the returned ends always lie where g is below the level
    cell = (b0 - a0) / (grid.size - 1)
    ends = []
    for sign, limit in ((-1.0, a0), (1.0, b0)):
        step = np.maximum(0.125 * cell, 1e-9)
        inner = u_star.copy()
        outer = u_star + sign * step
        for _ in range(200):
            outer = np.where(sign * (outer - limit) > 0, limit, outer)
            below = g(outer[:, None], idx_all)[:, 0] < level
            at_limit = outer == limit
            grow = ~(below | at_limit)
            if not np.any(grow):
                break
            inner = np.where(grow, outer, inner)
            step = np.where(grow, 2.0 * step, step)
            outer = np.where(grow, outer + sign * step, outer)
        for _ in range(20):
            mid = 0.5 * (inner + outer)
            below = g(mid[:, None], idx_all)[:, 0] < level
            outer = np.where(below, mid, outer)
            inner = np.where(below, inner, mid)
        ends.append(outer)
    a, b = ends

    x, w = gauss_legendre(_GL_POINTS)
    out = np.full(rows, np.nan)
    active = idx_all
    panels = 2
    prev = None
    while active.size:
        edges = np.linspace(0.0, 1.0, panels + 1)
        # nodes on the unit interval for all panels
        t = (0.5 * (edges[:-1, None] + edges[1:, None]) + 0.5 * np.diff(edges)[:, None] * x[None, :]).ravel()
        wt = (0.5 * np.diff(edges)[:, None] * w[None, :]).ravel()
        width = (b - a)[active]
        u = a[active, None] + width[:, None] * t[None, :]
        vals = g(u, active)
        cur = logsumexp(vals + np.log(wt)[None, :], axis=1) + np.log(width)
        if prev is not None:
            diff = np.abs(cur - prev[active])
            done = diff <= tol
            out[active[done]] = cur[done]
            keep = ~done
            nxt = np.full(rows, np.nan)
            nxt[active[keep]] = cur[keep]
            prev = nxt
            active = active[keep]
        else:
            prev = np.full(rows, np.nan)
            prev[active] = cur
        panels *= 2
        if active.size and panels > _MAX_PANELS:
            raise QuadratureError("precision integral did not converge", rel_error=float(np.max(diff)))
    return out


def _log_h0_integral(inp: LaplaceInputs, tol: float) -> np.ndarray:
    rss0 = inp.rss0
    half = 0.5 * inp.n

    def g(u, idx):
        return half[idx, None] * u - 0.5 * np.exp(u) * rss0[idx, None]

    return _log_integral_u(g, inp.n, rss0, inp.S, tol)


def _subgroup_ha(inp: LaplaceInputs, s: int, family: Family, bar, het_var, tol):
    """Log of the tau-integral for subgroup ``s`` at each average effect in ``bar``."""
    n = inp.n[s]
    rss1 = inp.rss1[s]
    bh = inp.beta_hat[s]
    d2 = inp.delta2[s]
    half = 0.5 * n
    bar = np.asarray(bar, dtype=float)
    het_var = np.broadcast_to(np.asarray(het_var, dtype=float), bar.shape)
    if family.standardized:
        V = d2 + het_var
        c0 = 0.5 * np.log(d2 / V)

        def g(u, idx):
            x = bh * np.exp(0.5 * u)
            diff = x - bar[idx, None]
            return c0[idx, None] + half * u - 0.5 * np.exp(u) * rss1 - 0.5 * diff * diff / V[idx, None]
    else:
        def g(u, idx):
            e = np.exp(u)
            hv = het_var[idx, None]
            diff = bh - bar[idx, None]
            return (half * u - 0.5 * e * rss1 - 0.5 * np.log1p(hv * e / d2)
                    - 0.5 * diff * diff * e / (d2 + hv * e))

    return _log_integral_u(g, n, rss1, bar.size, tol)


def _het_var(prior: EffectPrior, bar, literal_k: bool):
    if prior.family.is_cefn:
        k = prior.cefn_k
        return (k if literal_k else k * k) * np.asarray(bar) ** 2
    return np.full(np.shape(bar), prior.het_sd ** 2)


def _log_integrand_bar(inp, prior, log_h0, tol, literal_k):
    fam = prior.family
    mean_var = prior.mean_sd ** 2

    def f(bar):
        bar = np.asarray(bar, dtype=float)
        hv = _het_var(prior, bar, literal_k)
        total = -0.5 * bar * bar / mean_var - 0.5 * math.log(2 * math.pi * mean_var)
        for s in range(inp.S):
            total = total + _subgroup_ha(inp, s, fam, bar, hv, tol) - log_h0[s]
        return total

    return f


def _bar_location(inp, prior):
    """Breakpoints and length scale for the outer integral."""
    phi2 = 0.0 if prior.family.is_cefn else prior.het_sd ** 2
    sigma2 = inp.rss1 / (inp.n - 2.0)
    if prior.family.standardized:
        est = inp.beta_hat / np.sqrt(sigma2)
        var = inp.delta2 + phi2
    else:
        est = inp.beta_hat
        var = sigma2 * inp.delta2 + phi2
    zeta2 = 1.0 / np.sum(1.0 / var)
    center = zeta2 * np.sum(est / var)
    scale = 1.0 / math.sqrt(1.0 / prior.mean_sd ** 2 + 1.0 / zeta2)
    return [0.0, float(center), *est.tolist()], scale


def bf_quad(
    data: Sequence,
    prior: EffectPrior,
    rel_tol: float = DEFAULT_REL_TOL,
    *,
    sigma=None,
    literal_k: bool = False,
    max_subgroups: int = 3,
) -> BFResult:
    """Bayes factor by nested numerical integration.

    Parameters
    ----------
    data : sequence of SubgroupSuffStats or SubgroupSummary
        Summaries must carry the residual sums of squares.
    prior : EffectPrior
        ES, EE, CEFN_ES or CEFN_EE.
    rel_tol : float
        Target relative error of the Bayes factor.
    sigma : array_like, optional
        Known residual sds; the precisions are then fixed and only the
        average effect is integrated.
    literal_k : bool
        CEFN heterogeneity variance ``k b_bar^2`` instead of ``k^2 b_bar^2``.
    max_subgroups : int
        Cost guard on the number of informative subgroups.

    Raises
    ------
    QuadratureError
        If the tolerance is not achieved.
    """
    inp = laplace_inputs(data)
    if inp.S > max_subgroups:
        raise DataError(f"bf_quad is limited to {max_subgroups} informative subgroups")
    if prior.is_null:
        return BFResult(0.0, "oracle_quad", prior)
    if sigma is not None:
        return _bf_quad_known(data, inp, prior, sigma, rel_tol, literal_k)
    inner_tol = rel_tol / (10.0 * (inp.S + 1))
    log_h0 = _log_h0_integral(inp, inner_tol)
    if prior.mean_sd == 0.0:
        # the average effect is exactly zero: a product of one-dimensional integrals
        zero = np.zeros(1)
        hv = _het_var(prior, zero, literal_k)
        val = sum(float(_subgroup_ha(inp, s, prior.family, zero, hv, inner_tol)[0] - log_h0[s])
                  for s in range(inp.S))
        return BFResult(val, "oracle_quad", prior, rel_error=inner_tol * inp.S)
    f = _log_integrand_bar(inp, prior, log_h0, inner_tol, literal_k)
    bps, scale = _bar_location(inp, prior)
    res = integrate_log(f, breakpoints=bps, scale=scale, rel_tol=0.5 * rel_tol, initial_splits=2)
    return BFResult(res.log_value, "oracle_quad", prior, rel_error=res.rel_error + inner_tol * inp.S)


def _bf_quad_known(data, inp, prior, sigma, rel_tol, literal_k):
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (inp.S,))
    tau = 1.0 / sigma ** 2
    # with tau fixed, subgroup s contributes L_s(tau, bar) / L0_s(tau)
    bh, d2 = inp.beta_hat, inp.delta2

    def log_ratio(bar):
        bar = np.asarray(bar, dtype=float)
        hv = _het_var(prior, bar, literal_k)
        total = np.zeros_like(bar)
        for s in range(inp.S):
            if prior.family.standardized:
                V = d2[s] + hv
                x = bh[s] * math.sqrt(tau[s])
                total = total + 0.5 * np.log(d2[s] / V) - 0.5 * (x - bar) ** 2 / V + 0.5 * x * x / d2[s]
            else:
                ds2 = d2[s] / tau[s]
                D = ds2 + hv
                total = total + 0.5 * np.log(ds2 / D) - 0.5 * (bh[s] - bar) ** 2 / D + 0.5 * bh[s] ** 2 / ds2
        return total

    if prior.mean_sd == 0.0:
        return BFResult(float(log_ratio(np.zeros(1))[0]), "oracle_quad", prior)
    mv = prior.mean_sd ** 2

    def f(bar):
        return log_ratio(bar) - 0.5 * bar * bar / mv - 0.5 * math.log(2 * math.pi * mv)

    if prior.family.standardized:
        est = bh * np.sqrt(tau)
        var = d2 + (0.0 if prior.family.is_cefn else prior.het_sd ** 2)
    else:
        est = bh
        var = d2 / tau + (0.0 if prior.family.is_cefn else prior.het_sd ** 2)
    zeta2 = 1.0 / np.sum(1.0 / var)
    scale = 1.0 / math.sqrt(1.0 / mv + 1.0 / zeta2)
    bps = [0.0, float(zeta2 * np.sum(est / var)), *est.tolist()]
    res = integrate_log(f, breakpoints=bps, scale=scale, rel_tol=rel_tol)
    return BFResult(res.log_value, "oracle_quad", prior, rel_error=res.rel_error)


def bf_quad_tau(data: Sequence, prior: EffectPrior, rel_tol: float = 1e-10) -> BFResult:
    """Secondary oracle: direct integration of the precision integrands with ``scipy.integrate``.

    Integrates ``exp(log_k_ha)`` and ``exp(log_k_h0)`` over ``log tau`` with
    nested adaptive quadrature.  Supports ES and EE priors with at most two
    informative subgroups.
    """
    inp = laplace_inputs(data)
    if inp.S > 2:
        raise DataError("bf_quad_tau supports at most two informative subgroups")
    if prior.family.is_cefn:
        raise ValueError("bf_quad_tau handles ES and EE priors")
    if prior.is_null:
        return BFResult(0.0, "oracle_quad", prior)
    u_hat = np.log(inp.tau_reml)
    half_width = 12.0 * np.sqrt(2.0 / inp.n) + 2.0
    ranges = [(float(u - h), float(u + h)) for u, h in zip(u_hat, half_width)]
    ref_a = log_k_ha(inp, prior, inp.tau_reml)
    ref_0 = log_k_h0(inp, (inp.n - 2.0) / inp.rss0)

    def fa(*u):
        u = np.array(u)
        return math.exp(log_k_ha(inp, prior, np.exp(u)) + u.sum() - ref_a)

    def f0(*u):
        u = np.array(u)
        return math.exp(log_k_h0(inp, np.exp(u)) + u.sum() - ref_0)

    opts = {"epsabs": 0.0, "epsrel": rel_tol, "limit": 200}
    ia, ea = integrate.nquad(fa, ranges, opts=opts)
    u0 = np.log((inp.n - 2.0) / inp.rss0)
    ranges0 = [(float(u - h), float(u + h)) for u, h in zip(u0, half_width)]
    i0, e0 = integrate.nquad(f0, ranges0, opts=opts)
    val = math.log(ia) + ref_a - math.log(i0) - ref_0
    return BFResult(val, "oracle_quad", prior, rel_error=ea / ia + e0 / i0)


# Simulation

@dataclass(frozen=True)
class SimulationSpec:
    """Settings for simulating one multi-subgroup dataset.

    ``model`` is ``"null"``, ``"ES"`` or ``"EE"``.  Under ES the subgroup
    effects are ``b_s ~ N(mean, het^2)`` in residual-sd units; under EE
    ``beta_s ~ N(mean, het^2)`` on the phenotype scale.  Inactive subgroups
    (``active[s]`` false) have no effect.
    """

    n: tuple[int, ...]
    maf: tuple[float, ...] | float = 0.3
    sigma: tuple[float, ...] | float = 1.0
    model: str = "null"
    mean: float = 0.0
    het: float = 0.0
    active: tuple[bool, ...] | None = None

    def __post_init__(self):
        S = len(self.n)
        if S < 1 or any(int(k) < 3 for k in self.n):
            raise DataError("every subgroup needs n >= 3")
        for name in ("maf", "sigma"):
            val = getattr(self, name)
            arr = tuple(float(v) for v in np.broadcast_to(np.asarray(val, dtype=float), (S,)))
            object.__setattr__(self, name, arr)
        if any(not 0.0 < f < 1.0 for f in self.maf):
            raise DataError("allele frequencies must lie strictly between 0 and 1")
        if any(not s > 0 for s in self.sigma):
            raise DataError("residual sds must be positive")
        if self.model not in ("null", "ES", "EE"):
            raise DataError(f"unknown simulation model {self.model!r}")
        if self.active is not None and len(self.active) != S:
            raise DataError("activity pattern length must equal the number of subgroups")

    @property
    def S(self) -> int:
        return len(self.n)


@dataclass(frozen=True)
class RawDataset:
    """Per-subgroup phenotype and genotype vectors plus the true effects."""

    y: tuple[np.ndarray, ...]
    g: tuple[np.ndarray, ...]
    beta: tuple[float, ...]
    sigma: tuple[float, ...]

    def suffstats(self) -> list[SubgroupSuffStats]:
        return [suffstats_from_raw(y, g) for y, g in zip(self.y, self.g)]

    def summaries(self) -> list[SubgroupSummary]:
        return [summarize(s) for s in self.suffstats()]

    def record(self, snp: str = "sim", labels: Sequence[str] | None = None) -> SnpRecord:
        ss = self.suffstats()
        labels = tuple(labels) if labels is not None else tuple(f"s{i + 1}" for i in range(len(ss)))
        return SnpRecord(snp, labels, tuple(summarize(s) for s in ss), tuple(ss))


def _effects(spec: SimulationSpec, rng) -> np.ndarray:
    S = spec.S
    sig = np.array(spec.sigma)
    if spec.model == "null":
        beta = np.zeros(S)
    else:
        draws = spec.mean + spec.het * rng.standard_normal(S)
        beta = draws * sig if spec.model == "ES" else draws
    if spec.active is not None:
        beta = np.where(np.array(spec.active, dtype=bool), beta, 0.0)
    return beta


def simulate_dataset(spec: SimulationSpec, seed) -> RawDataset:
    """Simulate genotypes at Hardy-Weinberg proportions and normal phenotypes.

    The seed is mandatory; the same seed always gives the same arrays.
    """
    if seed is None:
        raise ValueError("a seed is required")
    rng = np.random.default_rng(seed)
    beta = _effects(spec, rng)
    ys, gs = [], []
    for s in range(spec.S):
        g = rng.binomial(2, spec.maf[s], size=int(spec.n[s])).astype(float)
        y = beta[s] * g + spec.sigma[s] * rng.standard_normal(int(spec.n[s]))
        ys.append(y)
        gs.append(g)
    return RawDataset(tuple(ys), tuple(gs), tuple(beta.tolist()), spec.sigma)


def simulate_suffstats_arrays(n_snps: int, n, seed, *, maf_range=(0.05, 0.5), missing_prob: float = 0.0,
                              effect_sd: float = 0.0, chunk: int = 4096):
    """Sufficient statistics for a panel of independent SNPs.

    Returns an array of shape (n_snps, S, 6) with columns
    ``n, sum_y, sum_g, sum_yy, sum_gg, sum_yg``; rows of subgroups that are
    missing for a SNP are all NaN.  Allele frequencies are drawn per SNP
    (shared across subgroups).  With ``effect_sd > 0`` each SNP gets a
    standardized effect ``N(0, effect_sd^2)`` shared by all subgroups.
    Generation is chunked with seeds spawned from ``seed``, so the output
    depends only on the arguments.
    """
    n = np.asarray(n, dtype=int)
    S = n.size
    out = np.empty((n_snps, S, 6))
    n_chunks = (n_snps + chunk - 1) // chunk
    seeds = np.random.SeedSequence(seed).spawn(max(n_chunks, 1))
    for c in range(n_chunks):
        rng = np.random.default_rng(seeds[c])
        lo, hi = c * chunk, min(n_snps, (c + 1) * chunk)
        m = hi - lo
        maf = rng.uniform(maf_range[0], maf_range[1], size=m)
        eff = effect_sd * rng.standard_normal(m)
        for s in range(S):
            g = rng.binomial(2, maf[:, None], size=(m, int(n[s]))).astype(float)
            y = eff[:, None] * g + rng.standard_normal((m, int(n[s])))
            out[lo:hi, s, 0] = n[s]
            out[lo:hi, s, 1] = y.sum(axis=1)
            out[lo:hi, s, 2] = g.sum(axis=1)
            out[lo:hi, s, 3] = (y * y).sum(axis=1)
            out[lo:hi, s, 4] = (g * g).sum(axis=1)
            out[lo:hi, s, 5] = (y * g).sum(axis=1)
        if missing_prob > 0:
            miss = rng.uniform(size=(m, S)) < missing_prob
            # keep at least one subgroup per SNP
            allmiss = miss.all(axis=1)
            miss[allmiss, rng.integers(0, S, size=int(allmiss.sum()))] = False
            out[lo:hi][miss] = np.nan
    return out


def panel_records(ss: np.ndarray, labels: Sequence[str] | None = None, prefix: str = "snp") -> list[SnpRecord]:
    """SNP records from a panel array of :func:`simulate_suffstats_arrays`.

    Missing subgroups (NaN rows) are left out of the record.  SNP ids are
    ``prefix`` plus a zero-padded 1-based index; subgroup labels default to
    ``sub1, sub2, ...``.
    """
    ss = np.asarray(ss, dtype=float)
    N, S = ss.shape[:2]
    labels = list(labels) if labels is not None else [f"sub{s + 1}" for s in range(S)]
    if len(labels) != S:
        raise ValueError("one label per subgroup is required")
    width = len(str(N))
    out = []
    for i in range(N):
        labs, sst, sums = [], [], []
        for s in range(S):
            row = ss[i, s]
            if math.isnan(row[0]):
                continue
            st = SubgroupSuffStats(int(row[0]), *map(float, row[1:]))
            try:
                summ = summarize(st)
            except DegenerateFitError:
                summ = _non_informative(st.n)
            labs.append(labels[s])
            sst.append(st)
            sums.append(summ)
        out.append(SnpRecord(f"{prefix}{i + 1:0{width}d}", tuple(labs), tuple(sums), tuple(sst)))
    return out


def summary_arrays_from_suffstats(ss: np.ndarray):
    """Vectorized least-squares summaries from an (..., 6) sufficient-statistic array.

    Returns a dict of arrays ``n, beta_hat, se_beta, b_hat, delta2, d2, t_stat,
    rss0, rss1``.  Missing, monomorphic or perfectly fitted subgroups get
    NaN estimates and infinite variances.
    """
    n, sy, sg, syy, sgg, syg = np.moveaxis(np.asarray(ss, dtype=float), -1, 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sxx = sgg - sg * sg / n
        syy_c = np.maximum(syy - sy * sy / n, 0.0)
        sxy = syg - sy * sg / n
        ok = np.isfinite(sxx) & (sxx > 1e-12 * n)
        beta = sxy / sxx
        rss1 = np.maximum(syy_c - sxy * sxy / sxx, 0.0)
        ok &= rss1 > 1e-12 * syy_c
        sigma2 = rss1 / (n - 2)
        delta2 = 1.0 / sxx
        se = np.sqrt(sigma2 * delta2)
        out = {
            "n": n,
            "beta_hat": np.where(ok, beta, np.nan),
            "se_beta": np.where(ok, se, np.inf),
            "b_hat": np.where(ok, beta / np.sqrt(sigma2), np.nan),
            "delta2": np.where(ok, delta2, np.inf),
            "d2": np.where(ok, se * se, np.inf),
            "t_stat": np.where(ok, beta / se, 0.0),
            "rss0": syy_c,
            "rss1": np.where(ok, rss1, syy_c),
        }
    return out


# Expectation of the Bayes factor under the null

@dataclass(frozen=True)
class NullMCResult:
    mean: float
    se: float
    replicates: int
    log_mean: float = field(default=float("nan"))

    @property
    def z(self) -> float:
        """Standardized distance of the mean from 1."""
        return (self.mean - 1.0) / self.se


def h0_expectation_mc(
    method: str,
    n,
    replicates: int,
    seed,
    *,
    prior: EffectPrior | None = None,
    implicit: tuple[str, float] | None = None,
    maf: float = 0.3,
    sigma: float = 1.0,
    chunk: int = 10_000,
) -> NullMCResult:
    """Monte-Carlo estimate of E(BF | H0) and its standard error.

    Parameters
    ----------
    method : {"known_variance", "abf", "abf_corrected"}
        Bayes factor variant.  ``known_variance`` uses the true residual sd.
    n : int or sequence of int
        Subgroup sample sizes.
    replicates : int
        Number of null datasets (at least 10^4).
    seed : int
        Seeds are spawned per chunk so the result does not depend on how
        replicates are split.
    prior : EffectPrior, optional
        ES or EE prior with fixed hyper-parameters.
    implicit : (kind, K), optional
        Use the implicit prior variance of :func:`implicit_prior_scale`
        instead: ``("maxh", K)`` sets ``phi_s^2 = K delta2_s`` and
        ``("fixed", K)`` sets ``omega^2 = K^2 zeta^2`` for each replicate.
    """
    if replicates < 10_000:
        raise ValueError("at least 10^4 replicates are required")
    if (prior is None) == (implicit is None):
        raise ValueError("give exactly one of prior or implicit")
    if method not in ("known_variance", "abf", "abf_corrected"):
        raise ValueError(f"unknown method {method!r}")
    n = np.atleast_1d(np.asarray(n, dtype=int))
    S = n.size
    standardized = True if prior is None else prior.family.standardized
    logs = np.empty(replicates)
    n_chunks = (replicates + chunk - 1) // chunk
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    for c in range(n_chunks):
        rng = np.random.default_rng(seeds[c])
        lo, hi = c * chunk, min(replicates, (c + 1) * chunk)
        m = hi - lo
        ss = np.empty((m, S, 6))
        for s in range(S):
            g = rng.binomial(2, maf, size=(m, int(n[s]))).astype(float)
            y = sigma * rng.standard_normal((m, int(n[s])))
            ss[:, s] = np.stack([np.full(m, n[s]), y.sum(1), g.sum(1), (y * y).sum(1), (g * g).sum(1),
                                 (y * g).sum(1)], axis=1)
        arr = summary_arrays_from_suffstats(ss)
        delta2 = arr["delta2"]
        if method == "known_variance":
            x = arr["beta_hat"] / sigma if standardized else arr["beta_hat"]
            v = delta2 if standardized else sigma * sigma * delta2
        else:
            x = arr["b_hat"] if standardized else arr["beta_hat"]
            v = delta2 if standardized else arr["d2"]
            if method == "abf_corrected":
                x = corrected_estimates(x, v, arr["n"])
        if implicit is not None:
            kind, K = implicit
            if kind == "maxh":
                het_var = K * v
                mean_var = 0.0
            else:
                het_var = 0.0
                with np.errstate(divide="ignore"):
                    zeta2 = 1.0 / np.sum(np.where(np.isfinite(v), 1.0 / v, 0.0), axis=1)
                mean_var = K * K * zeta2
            het_var = np.where(np.isfinite(het_var), het_var, 0.0)
        else:
            het_var, mean_var = prior.het_sd ** 2, prior.mean_sd ** 2
        vals = log_abf_arrays(x, v, het_var, mean_var)
        # a replicate with no informative subgroup has BF = 1
        logs[lo:hi] = np.where(np.isnan(vals), 0.0, vals)
    log_mean = float(logsumexp(logs) - math.log(replicates))
    mean = math.exp(log_mean)
    # standard error in a scaled space so huge Bayes factors do not overflow
    top = float(np.max(logs))
    scaled = np.exp(logs - top)
    sd_scaled = float(np.std(scaled, ddof=1))
    se = sd_scaled * math.exp(top) / math.sqrt(replicates)
    return NullMCResult(mean, se, replicates, log_mean)
