"""Adaptive Gauss-Kronrod quadrature for positive integrands given in log space.

Bayes factor integrands routinely span hundreds of orders of magnitude, so the
integrand is supplied as ``log f`` and every panel is rescaled by its own
maximum before summation.  Panels are refined in batches so that one call of
the integrand evaluates many nodes at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import QuadratureError

# 21-point Kronrod rule on [-1, 1] and its embedded 10-point Gauss rule.
_XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

# Full symmetric node set: 10 negative, centre, 10 positive.
NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[:-1][::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[:-1][::-1]])
GAUSS_WEIGHTS = np.zeros(21)
_gauss_pos = np.arange(1, 10, 2)
GAUSS_WEIGHTS[_gauss_pos] = _WG
GAUSS_WEIGHTS[20 - _gauss_pos] = _WG

_FINITE, _RIGHT, _LEFT = 0, 1, 2


@dataclass(frozen=True)
class QuadResult:
    """Outcome of a log-space integration.

    Attributes
    ----------
    log_value : float
        Natural log of the integral.
    rel_error : float
        Estimated relative error of ``exp(log_value)``.
    n_eval : int
        Number of integrand evaluations.
    n_intervals : int
        Number of panels in the final partition.
    """

    log_value: float
    rel_error: float
    n_eval: int
    n_intervals: int


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cached Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _segments(a: float, b: float, breakpoints, scale: float):
    pts = sorted({float(p) for p in breakpoints if np.isfinite(p) and a < p < b})
    if not pts and not (np.isfinite(a) or np.isfinite(b)):
        pts = [0.0]
    edges = [a, *pts, b]
    kinds, origins, widths = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isfinite(lo) and np.isfinite(hi):
            if hi > lo:
                kinds.append(_FINITE)
                origins.append(lo)
                widths.append(hi - lo)
        elif np.isfinite(lo):
            kinds.append(_RIGHT)
            origins.append(lo)
            widths.append(scale)
        else:
            kinds.append(_LEFT)
            origins.append(hi)
            widths.append(scale)
    return np.array(kinds), np.array(origins, dtype=float), np.array(widths, dtype=float)


def _map(kind, origin, width, t):
    """Map unit-interval nodes ``t`` to the integration variable with log-Jacobian."""
    one_m = 1.0 - t
    tail = t / one_m
    x = np.where(
        kind == _FINITE,
        origin + width * t,
        np.where(kind == _RIGHT, origin + width * tail, origin - width * tail),
    )
    log_jac = np.where(kind == _FINITE, np.log(width), np.log(width) - 2.0 * np.log(one_m))
    return x, log_jac


def _panel_estimates(logf, kind, origin, width, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    t = mid[:, None] + half[:, None] * NODES[None, :]
    x, log_jac = _map(kind[:, None], origin[:, None], width[:, None], t)
    vals = np.asarray(logf(x.ravel()), dtype=float).reshape(x.shape) + log_jac
    vals = np.where(np.isnan(vals), -np.inf, vals)
    peak = np.max(vals, axis=1)
    finite = np.isfinite(peak)
    safe_peak = np.where(finite, peak, 0.0)
    scaled = np.exp(vals - safe_peak[:, None])
    k_sum = scaled @ KRONROD_WEIGHTS
    g_sum = scaled @ GAUSS_WEIGHTS
    with np.errstate(divide="ignore"):
        log_est = np.where(finite, safe_peak + np.log(half * k_sum), -np.inf)
        log_err = np.where(finite, safe_peak + np.log(half * np.abs(k_sum - g_sum)), -np.inf)
    if np.any(peak == np.inf):
        raise QuadratureError("integrand is infinite inside the integration range")
    return log_est, log_err


def integrate_log(
    logf,
    a: float = -np.inf,
    b: float = np.inf,
    *,
    breakpoints=(),
    scale: float = 1.0,
    rel_tol: float = 1e-8,
    max_intervals: int = 4000,
    initial_splits: int = 4,
) -> QuadResult:
    """Integrate ``exp(logf(x))`` over ``[a, b]`` adaptively.

    Parameters
    ----------
    logf : callable
        Vectorized function returning ``log f(x)`` for a 1-D array ``x``.
    a, b : float
        Limits; either may be infinite.
    breakpoints : sequence of float
        Points where the integrand changes character (modes, kinks).  Infinite
        ranges are split at these points before the tail maps are applied.
    scale : float
        Length scale of the semi-infinite maps ``x = p +/- scale * t / (1 - t)``.
    rel_tol : float
        Target relative error of the integral.
    max_intervals : int
        Subdivision budget.

    Returns
    -------
    QuadResult

    Raises
    ------
    QuadratureError
        If the tolerance is not met within the budget; the exception carries
        the best estimate and its error.
    """
    if not b > a:
        raise ValueError("integration requires a < b")
    if not scale > 0:
        raise ValueError("scale must be positive")
    kind, origin, width = _segments(float(a), float(b), breakpoints, float(scale))
    n_seg = len(kind)
    # start each segment with a few equal panels in t
    edges = np.linspace(0.0, 1.0, initial_splits + 1)
    seg = np.repeat(np.arange(n_seg), initial_splits)
    lo = np.tile(edges[:-1], n_seg)
    hi = np.tile(edges[1:], n_seg)
    log_est, log_err = _panel_estimates(logf, kind[seg], origin[seg], width[seg], lo, hi)
    n_eval = 21 * len(lo)

    while True:
        total = logsumexp(log_est)
        if total == -np.inf:
            return QuadResult(-np.inf, 0.0, n_eval, len(lo))
        rel = np.exp(log_err - total)
        err = float(np.sum(rel))
        if err <= rel_tol:
            return QuadResult(float(total), err, n_eval, len(lo))
        # panels too narrow to split further are frozen
        splittable = (hi - lo) > 1e-13 * np.maximum(1.0, np.abs(lo))
        cand = np.where(splittable, rel, 0.0)
        if not np.any(cand > 0) or len(lo) >= max_intervals:
            raise QuadratureError(
                f"tolerance {rel_tol:g} not reached (estimated error {err:.3g})",
                estimate=float(total),
                rel_error=err,
            )
        order = np.argsort(cand)[::-1]
        worst = cand[order[0]]
        n_split = int(np.sum(cand[order[:64]] >= 0.1 * worst))
        pick = order[: max(n_split, 1)]
        keep = np.ones(len(lo), dtype=bool)
        keep[pick] = False
        mids = 0.5 * (lo[pick] + hi[pick])
        new_seg = np.concatenate([seg[pick], seg[pick]])
        new_lo = np.concatenate([lo[pick], mids])
        new_hi = np.concatenate([mids, hi[pick]])
        e_new, r_new = _panel_estimates(
            logf, kind[new_seg], origin[new_seg], width[new_seg], new_lo, new_hi
        )
        n_eval += 21 * len(new_lo)
        seg = np.concatenate([seg[keep], new_seg])
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        log_est = np.concatenate([log_est[keep], e_new])
        log_err = np.concatenate([log_err[keep], r_new])
