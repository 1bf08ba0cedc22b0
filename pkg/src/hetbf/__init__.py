"""Bayes factors for genetic association across heterogeneous subgroups."""

from .abf import (
    BFResult,
    abf_average,
    abf_corrected,
    abf_ee,
    abf_es,
    abf_fix,
    abf_grid,
    abf_maxh,
    abf_prior,
    abf_single,
)
from .casecontrol import CCSubgroupSummary, abf_cc, logistic_mle
from .cefn import abf_cefn
from .configbf import Configuration, config_bf, config_scan
from .dispatch import bf, bf_grid
from .engine import ScanConfig, ScanRow, het_only_hits, rank_and_group, scan
from .errors import (
    ConvergenceError,
    DataError,
    DegenerateFitError,
    HetBFError,
    MissingStatisticError,
    QuadratureError,
    SeparationError,
)
from .laplace import bf_known_variance, bfhat
from .oracle import SimulationSpec, bf_quad, h0_expectation_mc, simulate_dataset
from .priors import (
    EffectPrior,
    Family,
    PriorGrid,
    default_es_grid,
    grid_from_marginal_heterogeneity,
    recombination_ee_grid,
)
from .stats import (
    SnpRecord,
    SubgroupSuffStats,
    SubgroupSummary,
    se_from_pvalue,
    summarize,
    summary_from_effect_se,
    suffstats_from_raw,
)

__version__ = "0.1.0"
