"""Laplace approximation of Bayes factors with unknown residual variances.

Integrating the effects analytically leaves an S-dimensional integral over the
subgroup precisions ``tau_s = 1/sigma_s^2``.  The numerator and denominator
integrands are maximized over ``u = log tau`` and each integral is replaced by
its Laplace approximation in ``tau``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .abf import BFResult, abf_prior, log_abf_arrays
from .errors import ConvergenceError, DataError
from .priors import EffectPrior, Family
from .stats import SnpRecord, SubgroupSuffStats, SubgroupSummary, summarize

MAX_ITER = 200
GTOL = 1e-9
RESTARTS = 3


@dataclass(frozen=True)
class LaplaceInputs:
    """Per-subgroup quantities entering the precision integrals (informative subgroups only)."""

    n: np.ndarray
    rss0: np.ndarray
    rss1: np.ndarray
    beta_hat: np.ndarray
    delta2: np.ndarray

    @property
    def S(self) -> int:
        return len(self.n)

    @property
    def tau_reml(self) -> np.ndarray:
        return (self.n - 2.0) / self.rss1


@dataclass(frozen=True)
class PrecisionPoint:
    """Maximizer of a log precision integrand."""

    log_tau: np.ndarray
    objective: float
    hessian_logdet: float
    grad_norm: float = 0.0
    iterations: int = 0


def laplace_inputs(data: Sequence) -> LaplaceInputs:
    """Collect precision-integral inputs from sufficient statistics or full summaries."""
    if isinstance(data, SnpRecord):
        data = data.summaries
    sums = [summarize(d) if isinstance(d, SubgroupSuffStats) else d for d in data]
    rows = []
    for s in sums:
        if not isinstance(s, SubgroupSummary):
            raise TypeError("expected SubgroupSuffStats or SubgroupSummary")
        if not s.informative:
            continue
        if not (s.has_rss and math.isfinite(s.delta2)):
            raise DataError("the precision integrals need residual sums of squares; supply sufficient statistics")
        rows.append((s.n, s.rss0, s.rss1, s.beta_hat, s.delta2))
    if not rows:
        raise DataError("no informative subgroup")
    arr = np.array(rows, dtype=float)
    return LaplaceInputs(*arr.T)


# Integrands

def _as_inputs(data) -> LaplaceInputs:
    return data if isinstance(data, LaplaceInputs) else laplace_inputs(data)


def log_k_h0(inp, tau) -> float:
    """Log of the null integrand over subgroup precisions.

    ``inp`` is a :class:`LaplaceInputs` or a sequence of subgroup statistics.
    """
    inp = _as_inputs(inp)
    tau = np.asarray(tau, dtype=float)
    _check_tau(inp, tau)
    return float(np.sum((0.5 * inp.n - 1.0) * np.log(tau) - 0.5 * tau * inp.rss0))


def _check_tau(inp, tau):
    if tau.shape != (inp.S,):
        raise ValueError(f"tau must have one entry per informative subgroup ({inp.S})")
    if np.any(~(tau > 0)):
        raise ValueError("precisions must be positive")


def _es_parts(inp, phi, omega):
    v = inp.delta2 + phi * phi
    zeta2 = 1.0 / np.sum(1.0 / v)
    om2 = omega * omega
    A = om2 * zeta2 / (zeta2 + om2)
    a = inp.beta_hat / v
    c = inp.rss1 + inp.beta_hat ** 2 / v
    const = -0.5 * math.log1p(om2 / zeta2) + 0.5 * float(np.sum(np.log(inp.delta2 / v)))
    return A, a, c, const


def _es_value_grad(inp, prior, tau):
    A, a, c, const = _es_parts(inp, prior.het_sd, prior.mean_sd)
    sq = np.sqrt(tau)
    S = float(np.sum(a * sq))
    k = 0.5 * inp.n - 1.0
    val = const + float(np.sum(k * np.log(tau) - 0.5 * tau * c)) + 0.5 * A * S * S
    grad = k / tau - 0.5 * c + 0.5 * A * S * a / sq
    return val, grad


def _ee_value_grad(inp, prior, tau):
    psi2 = prior.het_sd ** 2
    w2 = prior.mean_sd ** 2
    d2 = inp.delta2
    D = d2 + tau * psi2
    r = tau / D
    rp = d2 / (D * D)
    R = float(np.sum(r))
    M = float(np.sum(r * inp.beta_hat))
    den = 1.0 + w2 * R
    k = 0.5 * inp.n - 1.0
    e = tau * inp.rss1 + tau * inp.beta_hat ** 2 / D
    ep = inp.rss1 + inp.beta_hat ** 2 * d2 / (D * D)
    val = (
        -0.5 * math.log(den)
        - 0.5 * float(np.sum(np.log1p(tau * psi2 / d2)))
        + float(np.sum(k * np.log(tau) - 0.5 * e))
        + 0.5 * w2 * M * M / den
    )
    grad = (
        -0.5 * w2 * rp / den
        - 0.5 * psi2 / D
        + k / tau
        - 0.5 * ep
        + 0.5 * w2 * (2.0 * M * inp.beta_hat * rp * den - M * M * w2 * rp) / (den * den)
    )
    return val, grad


def _value_grad(inp, prior, tau):
    if prior.is_null:
        k = 0.5 * inp.n - 1.0
        return log_k_h0(inp, tau), k / tau - 0.5 * inp.rss0
    if prior.family is Family.ES:
        return _es_value_grad(inp, prior, tau)
    if prior.family is Family.EE:
        return _ee_value_grad(inp, prior, tau)
    raise ValueError("the precision integrals are defined for ES and EE priors only")


def log_k_ha(inp, prior: EffectPrior, tau) -> float:
    """Log of the alternative integrand over subgroup precisions (effects integrated out)."""
    inp = _as_inputs(inp)
    tau = np.asarray(tau, dtype=float)
    _check_tau(inp, tau)
    return _value_grad(inp, prior, tau)[0]


def grad_log_k_ha(inp, prior: EffectPrior, tau) -> np.ndarray:
    """Gradient of :func:`log_k_ha` with respect to ``tau``."""
    inp = _as_inputs(inp)
    tau = np.asarray(tau, dtype=float)
    _check_tau(inp, tau)
    return _value_grad(inp, prior, tau)[1]


# Optimization in u = log tau

def _u_funcs(inp, prior):
    def f(u):
        tau = np.exp(u)
        val, g = _value_grad(inp, prior, tau)
        return val, g * tau

    return f


def _hessian_u(grad_u, u):
    """Central-difference Hessian of a gradient map with one Richardson step."""
    S = len(u)
    h = 1e-4 * max(1.0, float(np.max(np.abs(u))))
    H = np.empty((S, S))
    for i in range(S):
        e = np.zeros(S)
        e[i] = h
        d1 = (grad_u(u + e) - grad_u(u - e)) / (2 * h)
        d2 = (grad_u(u + 2 * e) - grad_u(u - 2 * e)) / (4 * h)
        H[:, i] = (4 * d1 - d2) / 3
    return 0.5 * (H + H.T)


def maximize_log_integrand(inp: LaplaceInputs, prior: EffectPrior, seed: int = 0) -> PrecisionPoint:
    """Find the maximizer of the alternative integrand over ``log tau``.

    BFGS from the REML start, then Newton steps with a finite-difference
    Hessian; up to :data:`RESTARTS` jittered restarts.
    """
    fu = _u_funcs(inp, prior)

    def neg(u):
        v, g = fu(u)
        return -v, -g

    def grad_u(u):
        return fu(u)[1]

    u0 = np.log(inp.tau_reml)
    rng = np.random.default_rng(seed)
    last = None
    for attempt in range(RESTARTS + 1):
        start = u0 if attempt == 0 else u0 + rng.normal(scale=0.5, size=u0.shape)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(neg, start, jac=True, method="BFGS",
                                    options={"gtol": GTOL, "maxiter": MAX_ITER})
        u = res.x
        if not np.all(np.isfinite(u)):
            last = "non-finite iterate"
            continue
        # Newton polish
        H = _hessian_u(grad_u, u)
        for _ in range(20):
            g = grad_u(u)
            if np.max(np.abs(g)) < 1e-11 * max(1.0, float(np.max(inp.n))):
                break
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > 1.0:
                break
            u = u - step
            H = _hessian_u(grad_u, u)
        val, g = fu(u)
        gnorm = float(np.max(np.abs(g)))
        tau = np.exp(u)
        # Hessian in tau from the Hessian in u: H_u = T H_tau T + diag(grad_u)
        H_tau = (H - np.diag(g)) / np.outer(tau, tau)
        try:
            chol = np.linalg.cholesky(-H_tau)
        except np.linalg.LinAlgError:
            last = "Hessian is not negative definite at the optimum"
            continue
        if gnorm > 1e-6 * max(1.0, float(np.max(inp.n))):
            last = f"gradient norm {gnorm:.3g} after optimization"
            continue
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return PrecisionPoint(u, val, logdet, gnorm, int(res.nit))
    raise ConvergenceError(f"precision optimization failed: {last}")


def _laplace_h0(inp: LaplaceInputs) -> tuple[float, float]:
    k = 0.5 * inp.n - 1.0
    tau0 = (inp.n - 2.0) / inp.rss0
    val = log_k_h0(inp, tau0)
    # diagonal Hessian -k / tau0^2
    logdet = float(np.sum(np.log(k) - 2.0 * np.log(tau0)))
    return val, logdet


def bfhat(data: Sequence, prior: EffectPrior, *, fallback: bool = True) -> BFResult:
    """Laplace-approximated Bayes factor with unknown residual variances.

    Parameters
    ----------
    data : sequence of SubgroupSuffStats or SubgroupSummary
        One entry per subgroup; summaries must carry the residual sums of squares.
    prior : EffectPrior
        ES or EE prior.
    fallback : bool
        On optimizer failure return the corrected ABF flagged
        ``"laplace_failed"`` instead of raising.
    """
    if prior.family.is_cefn:
        raise ValueError("bfhat supports ES and EE priors only")
    if prior.is_null:
        laplace_inputs(data)
        return BFResult(0.0, "laplace", prior)
    inp = laplace_inputs(data)
    try:
        pt = maximize_log_integrand(inp, prior)
    except ConvergenceError:
        if not fallback:
            raise
        sums = [summarize(d) if isinstance(d, SubgroupSuffStats) else d for d in data]
        res = abf_prior(sums, prior, corrected=True)
        return BFResult(res.log_bf, res.method, prior, flags=("laplace_failed",))
    v0, logdet0 = _laplace_h0(inp)
    log_bf = (pt.objective - 0.5 * pt.hessian_logdet) - (v0 - 0.5 * logdet0)
    return BFResult(float(log_bf), "laplace", prior)


def bf_single_exact(data, prior: EffectPrior) -> float:
    """Closed-form log Bayes factor for one subgroup under an ES prior.

    With a single subgroup the ES alternative integrand is a gamma kernel in
    ``tau`` with the same shape as the null one, so the integral ratio is exact.
    """
    inp = laplace_inputs(data)
    if inp.S != 1 or prior.family is not Family.ES:
        raise ValueError("the closed form needs one informative subgroup and an ES prior")
    A, a, c, const = _es_parts(inp, prior.het_sd, prior.mean_sd)
    b0 = 0.5 * inp.rss0[0]
    ba = 0.5 * c[0] - 0.5 * A * a[0] ** 2
    return float(const + 0.5 * inp.n[0] * (math.log(b0) - math.log(ba)))


def bf_known_variance(summaries: Sequence[SubgroupSummary], prior: EffectPrior, sigma) -> BFResult:
    """Exact Bayes factor when the residual sds ``sigma`` are known.

    Evaluates the ABF product formula with the true ``sigma_s`` in place of
    the estimates.
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (len(summaries),))
    if np.any(~(sigma > 0)):
        raise ValueError("sigma must be positive")
    if prior.family.is_cefn:
        raise ValueError("known-variance Bayes factors are defined for ES and EE priors")
    x, v = [], []
    for s, sg in zip(summaries, sigma):
        if not s.informative:
            x.append(0.0)
            v.append(math.inf)
            continue
        if not math.isfinite(s.delta2):
            raise DataError("known-variance Bayes factors need 1/Sxx (delta2)")
        if prior.family is Family.ES:
            x.append(s.beta_hat / sg)
            v.append(s.delta2)
        else:
            x.append(s.beta_hat)
            v.append(sg * sg * s.delta2)
    if not any(math.isfinite(vv) for vv in v):
        raise DataError("no informative subgroup")
    val = float(log_abf_arrays(np.array(x), np.array(v), prior.het_sd ** 2, prior.mean_sd ** 2))
    return BFResult(val, "known_variance", prior)
