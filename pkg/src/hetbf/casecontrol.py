"""Case-control association: logistic fits per subgroup and their approximate Bayes factor."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .abf import BFResult, log_abf_arrays
from .errors import ConvergenceError, DataError, SeparationError
from .priors import EffectPrior, Family

MAX_ABS_BETA = 15.0
GRAD_TOL = 1e-10
MAX_ITER = 100


@dataclass(frozen=True)
class CCSubgroupSummary:
    """Logistic-regression summary of one case-control subgroup.

    ``info`` is the 2x2 Fisher information for (intercept, effect) at the
    MLE.  A monomorphic genotype gives ``informative=False`` with infinite
    ``gamma2``.
    """

    beta_hat: float
    gamma2: float
    z2: float
    mu_hat: float
    info: tuple[tuple[float, float], tuple[float, float]]
    n: int = 0
    informative: bool = True

    @property
    def se(self) -> float:
        return math.sqrt(self.gamma2)

    # aliases so scans treat these like unstandardized linear summaries
    @property
    def se_beta(self) -> float:
        return self.se

    @property
    def d2(self) -> float:
        return self.gamma2


def _info(g, p):
    w = p * (1.0 - p)
    return np.array([[w.sum(), (w * g).sum()], [(w * g).sum(), (w * g * g).sum()]])


def _as_tuple(info):
    return ((float(info[0, 0]), float(info[0, 1])), (float(info[1, 0]), float(info[1, 1])))


def logistic_mle(y, g) -> CCSubgroupSummary:
    """Maximum-likelihood fit of ``logit P(y=1) = mu + beta g`` by Newton-Raphson.

    Raises
    ------
    DataError
        Length mismatch or only one outcome class.
    SeparationError
        The likelihood has no finite maximizer (complete or quasi-complete
        separation), detected as ``|beta| > 15`` or a diverging iteration.
    """
    y = np.asarray(y, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if y.shape != g.shape:
        raise DataError("outcome and genotype lengths differ")
    if y.size < 2:
        raise DataError("need at least two individuals")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("case-control outcomes must be 0 or 1")
    cases = y.sum()
    if cases == 0 or cases == y.size:
        raise DataError("both cases and controls are required")
    n = y.size
    ybar = cases / n
    mu0 = math.log(ybar / (1.0 - ybar))
    gvar = float(np.sum((g - g.mean()) ** 2))
    if gvar <= 1e-12 * n:
        p = np.full(n, ybar)
        info = _info(g, p)
        return CCSubgroupSummary(0.0, math.inf, 0.0, mu0, _as_tuple(info), n, False)

    theta = np.array([mu0, 0.0])
    X = np.column_stack([np.ones(n), g])
    for it in range(MAX_ITER):
        p = expit(X @ theta)
        grad = X.T @ (y - p)
        info = _info(g, p)
        if np.max(np.abs(grad)) < GRAD_TOL:
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("Fisher information became singular; the outcome is separated by genotype")
        theta = theta + step
        if abs(theta[1]) > MAX_ABS_BETA or not np.all(np.isfinite(theta)):
            raise SeparationError(f"effect estimate diverged (|beta| > {MAX_ABS_BETA}); separation")
    else:
        raise ConvergenceError("logistic Newton-Raphson did not converge")
    p = expit(X @ theta)
    info = _info(g, p)
    schur = info[1, 1] - info[0, 1] ** 2 / info[0, 0]
    if not schur > 0:
        raise SeparationError("effect is not identifiable")
    gamma2 = float(1.0 / schur)
    beta = float(theta[1])
    return CCSubgroupSummary(beta, gamma2, beta * beta / gamma2, float(theta[0]), _as_tuple(info), n)


def abf_cc(summaries: Sequence[CCSubgroupSummary], psi: float, w: float) -> BFResult:
    """Approximate Bayes factor for case-control subgroups.

    The EE product form with Wald statistics: ``beta_s ~ N(beta_bar, psi^2)``,
    ``beta_bar ~ N(0, w^2)``, and ``gamma_s^2`` as sampling variances.
    """
    if not summaries:
        raise DataError("no subgroups")
    if psi < 0 or w < 0 or not (math.isfinite(psi) and math.isfinite(w)):
        raise ValueError("psi and w must be finite and >= 0")
    x = np.array([s.beta_hat if s.informative else 0.0 for s in summaries])
    v = np.array([s.gamma2 if s.informative else math.inf for s in summaries])
    prior = EffectPrior(Family.EE, float(psi), float(w), allow_null=True)
    if not np.any(np.isfinite(v)):
        # nothing informative: both hypotheses predict the data equally
        return BFResult(0.0, "cc_abf", prior)
    return BFResult(float(log_abf_arrays(x, v, psi * psi, w * w)), "cc_abf", prior)
