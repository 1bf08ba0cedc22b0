from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetbf.abf import abf_es, abf_ee
from hetbf.errors import DataError
from hetbf.laplace import (
    bf_known_variance,
    bf_single_exact,
    bfhat,
    grad_log_k_ha,
    laplace_inputs,
    log_k_h0,
    log_k_ha,
    maximize_log_integrand,
)
from hetbf.oracle import bf_quad
from hetbf.priors import EffectPrior
from hetbf.stats import SubgroupSuffStats, suffstats_from_raw, summarize, summary_from_effect_se

from conftest import sim_suffstats

# Frozen independent references: log10 Bayes factors from the regression
# likelihood with the effects integrated in closed form and the precision
# integrated numerically (mpmath at 30 digits for one subgroup, scipy dblquad
# at rel 1e-11 for two).
S1_DATA = {
    11: (20, 3.5964742593653503, 16.0, 16.56313757914018, 22.0, 7.489834887333343),
    12: (20, 1.2915436163642593, 9.0, 12.904842836788893, 13.0, 4.713945376050158),
}
S1_REF = {
    # seed: (ES omega=0.5, ES omega=1, EE w=0.5)
    11: (0.20445321108269638, 0.10578193778401045, 0.20698861073746705),
    12: (0.21632200686675366, 0.125312247523198, 0.21147695711622776),
}
S2_DATA = (
    (30, 7.496893948259825, 18.0, 27.440350741720543, 26.0, 13.532414439769394),
    (25, 9.111594281043503, 14.0, 48.819973452308446, 14.0, 15.477629240207206),
)
S2_REF = {
    ("ES", 0.3, 0.4): 2.443503965238226,
    ("EE", 0.2, 0.3): 1.939987422855005,
}


def suff(row):
    return SubgroupSuffStats(*row)


class TestIntegrands:
    def test_null_prior_matches_null_integrand(self, rng):
        inp = laplace_inputs(sim_suffstats(seed=1))
        for fam in ("ES", "EE"):
            prior = EffectPrior.null(fam)
            for _ in range(5):
                tau = rng.uniform(0.2, 3.0, size=inp.S)
                assert log_k_ha(inp, prior, tau) == pytest.approx(log_k_h0(inp, tau), abs=1e-10)

    @pytest.mark.parametrize("fam,het,mean", [("ES", 0.2, 0.3), ("EE", 0.25, 0.1), ("ES", 0.0, 0.5), ("EE", 0.4, 0.0)])
    def test_gradient_matches_finite_differences(self, rng, fam, het, mean):
        inp = laplace_inputs(sim_suffstats(seed=2))
        prior = EffectPrior(fam, het, mean)
        for _ in range(5):
            tau = rng.uniform(0.3, 3.0, size=inp.S)
            g = grad_log_k_ha(inp, prior, tau)
            fd = np.empty_like(g)
            for i in range(inp.S):
                h = 1e-6 * tau[i]
                e = np.zeros(inp.S)
                e[i] = h
                fd[i] = (log_k_ha(inp, prior, tau + e) - log_k_ha(inp, prior, tau - e)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)

    def test_single_subgroup_true_precision(self):
        # with tau fixed, the alternative-to-null ratio is the known-variance factor
        ss = suff(S1_DATA[11])
        inp = laplace_inputs([ss])
        prior = EffectPrior("ES", 0.0, 0.5)
        tau = np.array([0.8])
        ratio = log_k_ha(inp, prior, tau) - log_k_h0(inp, tau)
        known = bf_known_variance([summarize(ss)], prior, 1.0 / math.sqrt(tau[0])).log_bf
        assert ratio == pytest.approx(known, abs=1e-12)

    def test_tau_validation(self):
        inp = laplace_inputs(sim_suffstats(seed=1))
        with pytest.raises(ValueError):
            log_k_h0(inp, np.ones(inp.S + 1))
        with pytest.raises(ValueError):
            log_k_h0(inp, -np.ones(inp.S))

    def test_needs_residual_sums(self):
        with pytest.raises(DataError):
            laplace_inputs([summary_from_effect_se(0.3, 0.1, 100, sigma_hat=1.0)])


class TestBfhat:
    @pytest.mark.parametrize("seed", sorted(S1_DATA))
    def test_single_subgroup_es_exact(self, seed):
        ss = [suff(S1_DATA[seed])]
        es_half, es_one, _ = S1_REF[seed]
        assert bfhat(ss, EffectPrior("ES", 0.0, 0.5)).log10_bf == pytest.approx(es_half, abs=1e-9)
        assert bfhat(ss, EffectPrior("ES", 0.0, 1.0)).log10_bf == pytest.approx(es_one, abs=1e-9)
        assert bf_single_exact(ss, EffectPrior("ES", 0.0, 0.5)) / math.log(10) == pytest.approx(es_half, abs=1e-12)

    @pytest.mark.parametrize("seed", sorted(S1_DATA))
    def test_single_subgroup_ee_close(self, seed):
        # the EE precision integrand is not a gamma kernel, so Laplace is only approximate
        ss = [suff(S1_DATA[seed])]
        ref = S1_REF[seed][2]
        assert bfhat(ss, EffectPrior("EE", 0.0, 0.5)).log10_bf == pytest.approx(ref, abs=2e-3)

    @pytest.mark.parametrize("key", sorted(S2_REF))
    def test_two_subgroups(self, key):
        fam, het, mean = key
        ss = [suff(r) for r in S2_DATA]
        assert bfhat(ss, EffectPrior(fam, het, mean)).log10_bf == pytest.approx(S2_REF[key], abs=5e-3)

    def test_null_prior(self):
        assert bfhat(sim_suffstats(seed=3), EffectPrior.null("ES")).log_bf == 0.0

    def test_optimizer_diagnostics(self):
        inp = laplace_inputs(sim_suffstats(seed=4))
        pt = maximize_log_integrand(inp, EffectPrior("ES", 0.2, 0.4))
        assert pt.iterations < 50
        assert pt.grad_norm < 1e-8
        assert np.all(np.isfinite(pt.log_tau))

    @given(st.integers(0, 10_000), st.permutations(range(3)))
    def test_ordering_invariance(self, seed, perm):
        ss = sim_suffstats(seed=seed)
        prior = EffectPrior("ES", 0.2, 0.3)
        a = bfhat(ss, prior).log_bf
        b = bfhat([ss[i] for i in perm], prior).log_bf
        assert a == pytest.approx(b, abs=1e-8)

    def test_accepts_summaries(self):
        ss = sim_suffstats(seed=5)
        prior = EffectPrior("EE", 0.1, 0.2)
        assert bfhat([summarize(s) for s in ss], prior).log_bf == bfhat(ss, prior).log_bf

    def test_cefn_rejected(self):
        with pytest.raises(ValueError):
            bfhat(sim_suffstats(seed=5), EffectPrior("CEFN_ES", None, 0.3, 0.3))

    def test_agrees_with_oracle(self):
        ss = sim_suffstats(n=(41, 59, 41), seed=6)
        prior = EffectPrior("ES", 0.2, 0.4)
        assert bfhat(ss, prior).log10_bf == pytest.approx(bf_quad(ss, prior).log10_bf, abs=1e-3)


class TestKnownVariance:
    @given(st.integers(0, 10_000), st.floats(0.5, 2.0))
    def test_es_with_true_sigma(self, seed, sigma):
        rng = np.random.default_rng(seed)
        sums = []
        for n in (30, 40):
            g = rng.binomial(2, 0.3, n).astype(float)
            y = sigma * rng.standard_normal(n)
            sums.append(summarize(suffstats_from_raw(y, g)))
        prior = EffectPrior("ES", 0.2, 0.3)
        got = bf_known_variance(sums, prior, sigma).log_bf
        exact = [summary_from_effect_se(s.beta_hat, sigma * math.sqrt(s.delta2), s.n, sigma_hat=sigma) for s in sums]
        assert got == pytest.approx(abf_es(exact, 0.2, 0.3).log_bf, abs=1e-10)
        prior_ee = EffectPrior("EE", 0.2, 0.3)
        got_ee = bf_known_variance(sums, prior_ee, sigma).log_bf
        assert got_ee == pytest.approx(abf_ee(exact, 0.2, 0.3).log_bf, abs=1e-10)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            bf_known_variance([summarize(suff(S1_DATA[11]))], EffectPrior("ES", 0.1, 0.1), 0.0)
