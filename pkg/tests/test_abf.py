from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from hetbf.abf import (
    BFResult,
    LN10,
    abf_average,
    abf_corrected,
    abf_ee,
    abf_es,
    abf_fix,
    abf_grid,
    abf_maxh,
    abf_single,
    log_abf_arrays,
)
from hetbf.errors import DataError, MissingStatisticError
from hetbf.laplace import bf_single_exact
from hetbf.oracle import bf_quad
from hetbf.priors import EffectPrior, recombination_ee_grid
from hetbf.stats import (
    SubgroupSuffStats,
    se_from_pvalue,
    summarize,
    summary_from_effect_se,
    suffstats_from_raw,
)

from conftest import sim_summaries


def es_summary(b_hat, delta2, n=100):
    """Summary with sigma_hat = 1 so that b_hat = beta_hat and delta2 = d2."""
    return summary_from_effect_se(b_hat, math.sqrt(delta2), n, sigma_hat=1.0)


def monomorphic(n=40, seed=0):
    rng = np.random.default_rng(seed)
    return summarize(suffstats_from_raw(rng.standard_normal(n), np.ones(n)))


def mvn_log_abf(x, v, het_var, mean_var):
    """Log ratio of the marginal densities of the estimates under the alternative and the null."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    S = x.size
    cov_a = np.diag(v) + het_var * np.eye(S) + mean_var * np.ones((S, S))
    cov_0 = np.diag(v)
    return sps.multivariate_normal(np.zeros(S), cov_a).logpdf(x) - sps.multivariate_normal(np.zeros(S), cov_0).logpdf(x)


def _exact_single(t, n, mean_sd):
    """Exact single-subgroup ES Bayes factor for a statistic t with unit delta2 * n."""
    sxx = float(n)
    beta = t / math.sqrt(n)
    rss1 = float(n - 2)
    ss = SubgroupSuffStats(n, 0.0, 0.0, rss1 + beta * beta * sxx, sxx, beta * sxx)
    return bf_single_exact([ss], EffectPrior("ES", 0.0, mean_sd))


summary_lists = st.lists(
    st.tuples(st.floats(-5, 5), st.floats(0.01, 2.0)), min_size=1, max_size=5
)


class TestAbfSingle:
    def test_zero_statistic(self):
        assert abf_single(0.0, 1.0, 1.0) / LN10 == pytest.approx(-0.15051, abs=5e-6)

    def test_large_statistic(self):
        exact = (0.5 * math.log(0.5) + 6.25) / LN10
        assert abf_single(25.0, 1.0, 1.0) / LN10 == pytest.approx(exact, abs=1e-14)
        assert exact == pytest.approx(2.56378, abs=1e-4)

    def test_zero_prior_variance(self):
        assert abf_single(10.0, 1.0, 0.0) == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            abf_single(-1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            abf_single(1.0, 0.0, 1.0)

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_monotone_in_t2(self, a, b, se2, pv):
        lo, hi = sorted((a, b))
        if hi - lo > 1e-6:
            assert abf_single(hi, se2, pv) > abf_single(lo, se2, pv)

    @given(st.floats(0, 50), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_matches_normal_density_ratio(self, t2, se2, pv):
        x = math.sqrt(t2 * se2)
        ref = sps.norm.logpdf(x, 0, math.sqrt(se2 + pv)) - sps.norm.logpdf(x, 0, math.sqrt(se2))
        assert abf_single(t2, se2, pv) == pytest.approx(ref, abs=1e-9 * max(1.0, abs(ref)))


class TestAbfEs:
    def test_two_subgroups_fixed(self):
        s = [es_summary(3.0, 1.0), es_summary(3.0, 1.0)]
        res = abf_es(s, 0.0, 1.0)
        # meta estimate 3 with variance 1/2, so T^2 = 18
        assert res.log10_bf == pytest.approx(abf_single(18.0, 0.5, 1.0) / LN10, abs=1e-12)
        assert res.log10_bf == pytest.approx(2.36724, abs=1e-4)

    def test_two_subgroups_maxh(self):
        s = [es_summary(3.0, 1.0), es_summary(3.0, 1.0)]
        res = abf_es(s, 1.0, 0.0)
        assert res.log_bf == pytest.approx(2 * abf_single(9.0, 1.0, 1.0), abs=1e-12)
        assert res.log10_bf == pytest.approx(1.65325, abs=1e-4)

    def test_result_metadata(self):
        res = abf_es([es_summary(1.0, 0.5)], 0.2, 0.3)
        assert isinstance(res, BFResult)
        assert res.method == "abf"
        assert res.prior == EffectPrior("ES", 0.2, 0.3)
        assert abf_es([es_summary(1.0, 0.5, n=50)], 0.2, 0.3, corrected=True).method == "abf_corrected"

    @pytest.mark.parametrize("seed", range(6))
    def test_against_oracle_large_n(self, seed):
        s = sim_summaries(n=(200, 200, 200), seed=seed, mean=0.1, het=0.1)
        prior = EffectPrior("ES", 0.1, 0.2)
        diff = abf_es(s, 0.1, 0.2).log10_bf - bf_quad(s, prior).log10_bf
        # the plug-in error grows like T^4 / n, so the 0.02 bound needs moderate statistics
        if max(x.t_stat ** 2 for x in s) < 9.0:
            assert abs(diff) < 0.02
        else:
            assert abs(diff) < 0.1

    def test_plugin_error_shrinks_with_n(self):
        prior = EffectPrior("ES", 0.0, 0.5)
        errs = []
        for n in (50, 500, 5000):
            s = [es_summary(3.0 / math.sqrt(n), 1.0 / n, n=n)]
            errs.append(abs(abf_es(s, 0.0, 0.5).log_bf - _exact_single(3.0, n, 0.5)))
        assert errs[0] > errs[1] > errs[2]

    def test_missing_sigma(self):
        s = [summary_from_effect_se(0.3, 0.1, 100)]
        with pytest.raises(MissingStatisticError):
            abf_es(s, 0.1, 0.2)
        assert math.isfinite(abf_ee(s, 0.1, 0.2).log_bf)

    def test_no_informative_subgroup(self):
        with pytest.raises(DataError):
            abf_es([monomorphic()], 0.1, 0.2)

    def test_negative_sd(self):
        with pytest.raises(ValueError):
            abf_es([es_summary(1.0, 1.0)], -0.1, 0.2)

    @given(summary_lists, st.floats(0, 2), st.floats(0, 2))
    def test_matches_mvn_oracle(self, pairs, phi, omega):
        x = [p[0] for p in pairs]
        v = [p[1] for p in pairs]
        got = abf_es([es_summary(a, b) for a, b in pairs], phi, omega).log_bf
        ref = mvn_log_abf(x, v, phi * phi, omega * omega)
        assert got == pytest.approx(ref, abs=1e-8 * max(1.0, abs(ref)))

    @given(summary_lists, st.floats(0, 2), st.floats(0, 2), st.randoms(use_true_random=False))
    def test_permutation_invariance(self, pairs, phi, omega, rnd):
        s = [es_summary(a, b) for a, b in pairs]
        perm = list(s)
        rnd.shuffle(perm)
        assert abf_es(perm, phi, omega).log_bf == pytest.approx(abf_es(s, phi, omega).log_bf, abs=1e-10)
        assert abf_ee(perm, phi, omega).log_bf == pytest.approx(abf_ee(s, phi, omega).log_bf, abs=1e-10)

    @given(st.floats(0.05, 20), st.integers(0, 2), st.integers(0, 10_000))
    def test_scale_invariance(self, a, which, seed):
        rng = np.random.default_rng(seed)
        raw = []
        for s in range(3):
            g = rng.binomial(2, 0.3, 60).astype(float)
            raw.append((0.3 * g + rng.standard_normal(60), g))
        base = [summarize(suffstats_from_raw(y, g)) for y, g in raw]
        scaled_raw = [(y * a, g) if s == which else (y, g) for s, (y, g) in enumerate(raw)]
        scaled = [summarize(suffstats_from_raw(y, g)) for y, g in scaled_raw]
        assert abf_es(scaled, 0.2, 0.3).log_bf == pytest.approx(abf_es(base, 0.2, 0.3).log_bf, abs=1e-10)

    def test_ee_not_scale_invariant(self):
        rng = np.random.default_rng(5)
        g = rng.binomial(2, 0.3, 80).astype(float)
        y = 0.4 * g + rng.standard_normal(80)
        base = [summarize(suffstats_from_raw(y, g))]
        scaled = [summarize(suffstats_from_raw(10.0 * y, g))]
        assert abf_es(scaled, 0.0, 0.3).log_bf == pytest.approx(abf_es(base, 0.0, 0.3).log_bf, abs=1e-10)
        # the EE prior is on the phenotype scale, so rescaling y changes the factor
        assert abs(abf_ee(scaled, 0.0, 0.3).log_bf - abf_ee(base, 0.0, 0.3).log_bf) > 0.1


class TestNonInformative:
    @given(summary_lists, st.floats(0, 2), st.floats(0, 2))
    def test_appending_monomorphic(self, pairs, phi, omega):
        s = [es_summary(a, b) for a, b in pairs]
        extra = s + [monomorphic()]
        for fn in (abf_es, abf_ee):
            assert abs(fn(extra, phi, omega).log10_bf - fn(s, phi, omega).log10_bf) < 1e-9
        assert abs(abf_maxh(extra, phi).log10_bf - abf_maxh(s, phi).log10_bf) < 1e-9
        assert abs(abf_fix(extra, omega).log10_bf - abf_fix(s, omega).log10_bf) < 1e-9

    def test_array_core_skips_infinite_variance(self):
        x = np.array([1.0, 2.0, 0.0])
        v = np.array([0.5, 0.3, np.inf])
        assert log_abf_arrays(x, v, 0.04, 0.09) == pytest.approx(log_abf_arrays(x[:2], v[:2], 0.04, 0.09), abs=1e-14)

    def test_array_core_all_missing(self):
        assert np.isnan(log_abf_arrays(np.zeros(2), np.full(2, np.inf), 0.1, 0.1))


class TestExtremes:
    @given(summary_lists, st.floats(0.01, 3))
    def test_maxh_is_sum_of_singles(self, pairs, phi):
        s = [es_summary(a, b) for a, b in pairs]
        total = 0.0
        for a, b in pairs:
            total += abf_single(a * a / b, b, phi * phi)
        assert abs(abf_maxh(s, phi).log_bf - total) <= 1e-12

    def test_maxh_per_subgroup_sd(self):
        s = [es_summary(1.0, 0.5), es_summary(-2.0, 0.2)]
        got = abf_maxh(s, [0.3, 0.6]).log_bf
        ref = abf_single(2.0, 0.5, 0.09) + abf_single(20.0, 0.2, 0.36)
        assert got == pytest.approx(ref, abs=1e-14)

    @given(st.floats(-5, 5), st.floats(0.01, 2), st.floats(0.01, 3))
    def test_fix_single_subgroup(self, x, v, omega):
        assert abf_fix([es_summary(x, v)], omega).log_bf == pytest.approx(
            abf_single(x * x / v, v, omega * omega), abs=1e-12
        )

    @given(summary_lists, st.floats(0.01, 3))
    def test_fix_and_maxh_are_specializations(self, pairs, sd):
        s = [es_summary(a, b) for a, b in pairs]
        assert abf_fix(s, sd).log_bf == abf_es(s, 0.0, sd).log_bf
        assert abf_maxh(s, sd).log_bf == pytest.approx(abf_es(s, sd, 0.0).log_bf, abs=1e-12)


class TestCorrected:
    def test_large_n_identity(self):
        s = [es_summary(0.004, 1e-6, n=10**6), es_summary(-0.001, 1e-6, n=10**6)]
        diff = abf_corrected(s, 0.001, 0.002).log10_bf - abf_es(s, 0.001, 0.002).log10_bf
        assert abs(diff) < 0.001

    def test_zero_statistics(self):
        s = [es_summary(0.0, 0.1, n=20), es_summary(0.0, 0.2, n=15)]
        assert abf_corrected(s, 0.3, 0.4).log_bf == pytest.approx(abf_es(s, 0.3, 0.4).log_bf, abs=1e-15)

    def test_shrinks_small_sample_statistics(self):
        s = [es_summary(1.5, 0.1, n=10)]
        assert abf_corrected(s, 0.0, 1.0).log_bf < abf_es(s, 0.0, 1.0).log_bf

    def test_sign_preserved(self):
        pos = abf_corrected([es_summary(1.0, 0.1, n=12), es_summary(0.8, 0.1, n=12)], 0.0, 1.0)
        mixed = abf_corrected([es_summary(1.0, 0.1, n=12), es_summary(-0.8, 0.1, n=12)], 0.0, 1.0)
        assert pos.log_bf > mixed.log_bf

    def test_df_guard(self):
        with pytest.raises(DataError):
            abf_corrected([es_summary(1.0, 0.1, n=4)], 0.1, 0.1)
        assert math.isfinite(abf_corrected([es_summary(1.0, 0.1, n=5)], 0.1, 0.1).log_bf)

    def test_ee_family(self):
        s = [es_summary(1.0, 0.1, n=12)]
        assert abf_corrected(s, 0.1, 0.3, family="EE").log_bf < abf_ee(s, 0.1, 0.3).log_bf


class TestAverage:
    def test_identity(self):
        assert abf_average([(3.2, 1.0)]).log_bf == 3.2

    @given(st.floats(-50, 50), st.floats(0.01, 0.99))
    def test_equal_components(self, val, w):
        assert abf_average([(val, w), (val, 1 - w)]).log_bf == pytest.approx(val, abs=1e-12)

    @given(st.lists(st.floats(-1e4 * LN10, 1e4 * LN10), min_size=1, max_size=8))
    def test_bounds(self, logs):
        w = [1.0 / len(logs)] * len(logs)
        val = abf_average(logs, w).log_bf
        assert min(logs) <= val <= max(logs)
        assert math.isfinite(val)

    def test_extreme_range(self):
        big = 1e4 * LN10
        val = abf_average([(big, 0.5), (-big, 0.5)]).log10_bf
        assert val == pytest.approx(1e4 - math.log10(2), abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            abf_average([])
        with pytest.raises(ValueError):
            abf_average([(1.0, 0.5), (2.0, 0.4)])
        with pytest.raises(ValueError):
            abf_average([(1.0, 1.5), (2.0, -0.5)])
        with pytest.raises(ValueError):
            abf_average([1.0, 2.0], [1.0])

    def test_accepts_results(self):
        a = BFResult(1.0, "abf")
        b = BFResult(2.0, "abf")
        res = abf_average([a, b], [0.5, 0.5])
        assert res.method == "abf"
        assert res.log_bf == pytest.approx(math.log(0.5 * math.e + 0.5 * math.e**2))


TABLE1 = {
    # snp: (male beta, male p, female beta, female p, single male, single female, fix, av)
    "rs3796619": (-67.9, 1.1e-14, 67.6, 7.9e-6, 11.12, 2.81, 3.07, 13.91),
    "rs1670533": (-66.1, 1.8e-11, 92.8, 4.1e-8, 8.06, 4.55, 1.10, 12.58),
    "rs2045065": (-66.2, 1.6e-11, 92.2, 6.0e-8, 8.11, 4.40, 1.18, 12.49),
}


def table1_summaries(bm, pm, bf, pf):
    return [
        summary_from_effect_se(bm, se_from_pvalue(bm, pm), 1887),
        summary_from_effect_se(bf, se_from_pvalue(bf, pf), 2040),
    ]


class TestTable1:
    @pytest.mark.parametrize("snp", sorted(TABLE1))
    def test_grid_average(self, snp):
        bm, pm, bf, pf, sm, sf, fx, av = TABLE1[snp]
        s = table1_summaries(bm, pm, bf, pf)
        grid = recombination_ee_grid()
        assert abf_grid(s, grid).log10_bf == pytest.approx(av, abs=0.3)
        fixed = grid.subset(lambda p: p.het_sd == 0.0)
        assert abf_grid(s, fixed).log10_bf == pytest.approx(fx, abs=0.3)
        for summ, ref in zip(s, (sm, sf)):
            single = abf_grid([summ], fixed).log10_bf
            assert single == pytest.approx(ref, abs=0.4)

    def test_standard_errors(self):
        s = table1_summaries(*TABLE1["rs3796619"][:4])
        assert s[0].se_beta == pytest.approx(8.78, abs=0.01)
        assert s[1].se_beta == pytest.approx(15.1, abs=0.05)
