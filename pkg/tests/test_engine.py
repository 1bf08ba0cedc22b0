from __future__ import annotations

import math

import numpy as np
import pytest

from hetbf.abf import abf_fix, abf_grid, abf_maxh
from hetbf.configbf import best_configuration, config_scan
from hetbf.dispatch import bf_grid
from hetbf.engine import ScanConfig, ScanRow, het_only_hits, rank_and_group, scan
from hetbf.errors import DataError
from hetbf.oracle import panel_records, simulate_suffstats_arrays
from hetbf.priors import Family, default_es_grid, grid_from_marginal_heterogeneity
from hetbf.stats import SnpRecord, maxh_chi2, meta_stat_es, summary_from_effect_se

from test_abf import es_summary, monomorphic


def panel(n_snps=200, seed=1, missing=0.2, effect_sd=0.3):
    ss = simulate_suffstats_arrays(n_snps, (40, 55, 45), seed, missing_prob=missing, effect_sd=effect_sd)
    return panel_records(ss)


def row(snp, **values):
    return ScanRow(snp, values)


class TestScanConfig:
    def test_columns(self):
        cfg = ScanConfig(methods=("abf", "cefn"), fix=True, maxh=True, configurations=True)
        assert cfg.columns == ("abf", "cefn", "fix", "maxh", "het_cefn_fix", "het_maxh_fix", "config")

    @pytest.mark.parametrize("kwargs", [
        {"methods": ()},
        {"methods": ("abf", "abf")},
        {"methods": ("other",)},
        {"family": "CEFN_ES"},
        {"family": "EE"},
        {"cefn_k": -1.0},
        {"methods": ("laplace",), "input_mode": "sumstats"},
        {"input_mode": "cc_raw"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ScanConfig(**kwargs)

    def test_marginals(self):
        assert ScanConfig().marginals == (0.1, 0.2, 0.4, 0.8, 1.6)


class TestScan:
    def test_order_and_values(self):
        recs = panel(50)
        cfg = ScanConfig(methods=("abf", "abf_corrected"))
        rows = list(scan(recs, cfg))
        assert [r.snp for r in rows] == [r.snp for r in recs]
        grid = default_es_grid()
        for r, rec in zip(rows, recs):
            assert r["abf"] == pytest.approx(abf_grid(rec.summaries, grid).log10_bf, abs=1e-10)
            assert r["abf_corrected"] == pytest.approx(abf_grid(rec.summaries, grid, corrected=True).log10_bf,
                                                       abs=1e-10)

    def test_slow_methods_match_direct(self):
        recs = panel(5, seed=2)
        cfg = ScanConfig(methods=("laplace", "cefn"), fix=True, configurations=True)
        rows = list(scan(recs, cfg))
        for r, rec in zip(rows, recs):
            assert r["laplace"] == pytest.approx(bf_grid(rec, cfg.grid, "laplace").log10_bf, abs=1e-12)
            assert r["cefn"] == pytest.approx(bf_grid(rec, cfg.cefn_grid()).log10_bf, abs=1e-12)
            assert r["het_cefn_fix"] == pytest.approx(r["cefn"] - r["fix"], abs=1e-12)
            assert r.best_config == str(best_configuration(config_scan(rec)))

    def test_extremes_bound_grid(self):
        recs = panel(100, seed=3)
        rows = list(scan(recs, ScanConfig(fix=True, maxh=True)))
        for r in rows:
            assert r["het_maxh_fix"] == pytest.approx(r["maxh"] - r["fix"], abs=1e-12)
            assert math.isfinite(r["abf"])

    def test_chunk_size_irrelevant(self):
        recs = panel(300, seed=4)
        cfg = ScanConfig(methods=("abf", "abf_corrected"), fix=True, maxh=True)
        a = [r.values for r in scan(recs, cfg, chunk_size=64)]
        b = [r.values for r in scan(recs, cfg, chunk_size=2048)]
        assert a == b

    def test_workers_identical(self):
        recs = panel(5000, seed=5)
        cfg = ScanConfig(methods=("abf",), fix=True, maxh=True)
        a = [r.values for r in scan(recs, cfg, workers=1, chunk_size=512)]
        b = [r.values for r in scan(recs, cfg, workers=3, chunk_size=512)]
        assert a == b

    def test_removing_snps_leaves_others(self):
        recs = panel(100, seed=6)
        cfg = ScanConfig(fix=True)
        full = {r.snp: r.values for r in scan(recs, cfg)}
        part = {r.snp: r.values for r in scan(recs[::3], cfg)}
        for snp, vals in part.items():
            assert vals == full[snp]

    def test_empty_input(self):
        with pytest.raises(DataError):
            list(scan([], ScanConfig()))

    def test_flags(self):
        good = panel(1, seed=7)[0]
        nosigma = SnpRecord("nosig", ("a",), (summary_from_effect_se(0.3, 0.1, 100),))
        mono = SnpRecord("mono", ("a",), (monomorphic(),))
        invalid = SnpRecord("bad", good.subgroups, good.summaries, good.suffstats,
                            {"invalid": True, "flags": ("perfect_fit:sub1",)})
        tiny = SnpRecord("tiny", ("a",), (summary_from_effect_se(0.3, 0.1, 4, sigma_hat=1.0),))
        rows = {r.snp: r for r in scan([good, nosigma, mono, invalid, tiny],
                                       ScanConfig(methods=("abf", "abf_corrected")))}
        assert rows[good.snp].flags == ()
        assert "missing_sigma" in rows["nosig"].flags and math.isnan(rows["nosig"]["abf"])
        assert "no_informative_subgroup" in rows["mono"].flags and rows["mono"]["abf"] == 0.0
        assert "perfect_fit:sub1" in rows["bad"].flags and math.isnan(rows["bad"]["abf"])
        assert "correction_undefined" in rows["tiny"].flags
        assert math.isnan(rows["tiny"]["abf_corrected"]) and math.isfinite(rows["tiny"]["abf"])

    def test_slow_failure_is_flagged(self):
        # sumstats records lack residual sums, so the Laplace column fails per SNP
        rec = SnpRecord("s", ("a",), (summary_from_effect_se(0.3, 0.1, 100, sigma_hat=1.0),))
        r = next(scan([rec], ScanConfig(methods=("abf", "laplace"))))
        assert math.isfinite(r["abf"]) and math.isnan(r["laplace"])
        assert any(f.startswith("laplace_failed:") for f in r.flags)

    def test_ee_family(self):
        recs = panel(20, seed=8)
        grid = grid_from_marginal_heterogeneity([0.1, 0.4], [0.0, 1.0], family="EE")
        rows = list(scan(recs, ScanConfig(family=Family.EE, grid=grid)))
        for r, rec in zip(rows, recs):
            assert r["abf"] == pytest.approx(abf_grid(rec.summaries, grid).log10_bf, abs=1e-10)


class TestRanking:
    def test_descending_with_ties_and_nan(self):
        rows = [row("c", abf=1.0), row("a", abf=2.0), row("b", abf=1.0), row("d", abf=float("nan"))]
        assert [r.snp for r in rank_and_group(rows)] == ["a", "b", "c", "d"]

    def test_grouping(self):
        rows = [row("a", abf=1.0), row("b", abf=3.0), row("c", abf=2.0), row("d", abf=5.0)]
        groups = {"a": "g1", "b": "g1", "c": "g2"}
        top = rank_and_group(rows, group_key=groups)
        assert [r.snp for r in top] == ["b", "c"]
        top = rank_and_group(rows, group_key=lambda r: "all")
        assert [r.snp for r in top] == ["d"]

    def test_unknown_column(self):
        with pytest.raises(KeyError):
            rank_and_group([row("a", abf=1.0)], column="maxh")

    def test_het_only(self):
        rows = [
            row("hit", fix=2.0, maxh=7.0),
            row("both", fix=8.0, maxh=9.0),
            row("none", fix=1.0, maxh=2.0),
            row("edge", fix=5.9, maxh=6.0),
        ]
        assert [r.snp for r in het_only_hits(rows)] == ["hit", "edge"]
        with pytest.raises(KeyError):
            het_only_hits([row("x", abf=1.0)])

    def test_proposition_ranking_through_scan(self):
        # fixed-effects ABF with omega proportional to the meta standard error ranks like the meta statistic
        recs = panel(300, seed=9, missing=0.3)
        vals, stats = [], []
        for rec in recs:
            m = meta_stat_es(rec.summaries, 0.0)
            vals.append(abf_fix(rec.summaries, math.sqrt(m.se2)).log_bf)
            stats.append(m.t2)
        assert np.array_equal(np.argsort(vals, kind="stable"), np.argsort(stats, kind="stable"))

    def test_maxh_ranking_needs_equal_subgroup_counts(self):
        # each present subgroup adds -log(1 + K)/2, so a missing subgroup can reverse the order
        one = [es_summary(math.sqrt(10.0), 1.0)]
        two = [es_summary(math.sqrt(5.0), 1.0), es_summary(math.sqrt(5.2), 1.0)]
        assert maxh_chi2(two)[0] > maxh_chi2(one)[0]
        assert abf_maxh(two, 1.0).log_bf < abf_maxh(one, 1.0).log_bf
