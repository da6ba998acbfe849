import math

import numpy as np
import pytest

import sparsity_minimax.tests_kv as tkv
from sparsity_minimax import harness, kernels
from sparsity_minimax.errors import DomainError
from sparsity_minimax.harness import MCConfig, TestHandle


def level_bound(alpha, reps):
    return alpha + 3.0 * math.sqrt(alpha * (1 - alpha) / reps)


class TestHcThreshold:
    def test_independent_evaluation(self):
        assert tkv.hc_threshold(1, 0.05, 1000) == pytest.approx(54.33609655585691, abs=1e-9)

    def test_underflowed_tail(self):
        expected = (2 / 3) * math.log(1600 * math.pi ** 2 / 0.15)
        assert tkv.hc_threshold(40, 0.05, 100) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(7.709559109875036, abs=1e-12)

    def test_decreasing_in_t(self):
        assert tkv.hc_threshold(1, 0.05, 1000) > tkv.hc_threshold(5, 0.05, 1000)
        assert tkv.hc_threshold(5, 0.05, 1000) == pytest.approx(5.029117780065101, abs=1e-9)

    def test_alpha_domain(self):
        with pytest.raises(DomainError):
            tkv.hc_threshold(1, 1.0, 10)

    def test_t_star(self):
        assert tkv.hc_params(500, 0.1).t_star == math.ceil(math.sqrt(2 * math.log(20000)))


class TestHc:
    def test_zero_vector(self):
        for k0 in (0, 3, 50):
            assert not tkv.test_hc(np.zeros(100), k0, 0.1, 1.0).reject

    def test_cap_fires(self):
        y = np.zeros(100)
        y[:4] = 10 * math.sqrt(math.log(100))
        v = tkv.test_hc(y, 3, 0.1, 1.0)
        assert v.reject and v.fired_by == "HC-cap"

    def test_diagnostics_cover_grid(self):
        v = tkv.test_hc(np.zeros(100), 0, 0.1, 1.0)
        t_star = tkv.hc_params(100, 0.1).t_star
        assert len(v.diagnostics) == t_star + 1
        assert all(math.isfinite(r.threshold) for r in v.diagnostics)

    def test_level(self):
        cfg = MCConfig(reps=2000, seed=11)
        rep = harness.mc_reject_rate(TestHandle("hc", 0, 0.1), np.zeros(500), 1.0, cfg)
        assert rep.estimate <= level_bound(0.1, 2000)

    def test_k0_domain(self):
        with pytest.raises(DomainError):
            tkv.test_hc(np.zeros(10), 10, 0.1, 1.0)


class TestBulk:
    def test_scale_examples(self):
        assert tkv.bulk_scale(0, 10000) == 1.0
        assert tkv.bulk_scale(100, 10000) == 1.0
        # independently evaluated; the three-digit figure 2.3541 quoted elsewhere is off
        assert tkv.bulk_scale(1000, 10000) == pytest.approx(2.367524062388404, abs=1e-12)

    def test_threshold_at_unit_scale(self):
        n, alpha = 500, 0.1
        assert tkv.bulk_threshold(0, alpha, n) == pytest.approx(
            math.sqrt(math.e) * math.sqrt(8 * n * math.log(2 / alpha)), rel=1e-14)

    def test_zero_vector_sign(self):
        for s in (1.0, 2.0, 3.0):
            z = tkv.stat_bulk(np.zeros(50), s, 1.0)
            assert z == pytest.approx(50 * (1 - kernels.kappa(0.0, s)), rel=1e-7)
            assert z <= 0

    def test_table_and_exact_agree(self):
        y = np.random.default_rng(4).standard_normal(1000) * 3
        assert tkv.stat_bulk(y, 2.0, 1.0) == pytest.approx(tkv.stat_bulk(y, 2.0, 1.0, exact=True), abs=1e-4)

    def test_scale_domain(self):
        with pytest.raises(DomainError):
            tkv.stat_bulk(np.zeros(5), 0.5, 1.0)

    def test_level(self):
        cfg = MCConfig(reps=2000, seed=12)
        rep = harness.mc_reject_rate(TestHandle("bulk", 25, 0.1), np.zeros(500), 1.0, cfg)
        assert rep.estimate <= level_bound(0.1, 2000)

    def test_dense_power(self):
        # the signal sum n (a^2 ^ s^-2) must reach 50 times the allowance; at k0 = 0
        # that needs n >= (50 sqrt(8 e log 20))^2, about 1.63e5
        k0, alpha = 0, 0.1
        n = 170_000
        allowance = tkv.bulk_threshold(k0, alpha, n)
        s = tkv.bulk_scale(k0, n)
        a = 1.0 / s
        assert n * min(a * a, s ** -2) >= 50 * allowance
        cfg = MCConfig(reps=20, seed=13)
        rep = harness.mc_reject_rate(TestHandle("bulk", k0, alpha), np.full(n, a), 1.0, cfg)
        assert rep.estimate >= 0.9


class TestInter:
    def test_dyadic_example(self):
        dl = tkv.dyadic_l(200, 100)
        assert dl.l_min == 45
        assert all(l <= 200 / 4 for l in dl.levels)

    def test_levels_are_doublings(self):
        dl = tkv.dyadic_l(5000, 1000)
        assert dl.levels == tuple(dl.l_min * 2 ** j for j in range(len(dl.levels)))

    def test_applicability(self):
        with pytest.raises(DomainError):
            tkv.dyadic_l(199, 100)
        with pytest.raises(DomainError):
            tkv.test_inter(np.zeros(100), 100, 0.1, 1.0)

    def test_r_at_quarter(self):
        k0, n = 4 * 45 * 4, 100
        dl = tkv.dyadic_l(k0, n)
        l = dl.levels[-1]
        if l == k0 // 4:
            r, _ = tkv.inter_params(k0, l, n)
            assert r == pytest.approx(math.sqrt(2 * math.log(4)))

    @pytest.mark.parametrize("k0,n", [(200, 100), (400, 400), (5000, 1000), (80000, 10000)])
    def test_r_bounded_by_w(self, k0, n):
        for l in tkv.dyadic_l(k0, n).levels:
            r, w = tkv.inter_params(k0, l, n)
            assert w > 0 and r <= math.sqrt(2) * w + 1e-12

    def test_not_in_collection(self):
        with pytest.raises(DomainError):
            tkv.inter_params(200, 46, 100)

    def test_population_mean_under_zero(self):
        r, w = tkv.inter_params(400, 90, 400)
        assert harness.oracle_mean_inter(np.zeros(400), r, w) == 0.0

    def test_level_flat_small_entries(self):
        cfg = MCConfig(reps=1000, seed=14)
        theta = np.full(400, 0.5)
        rep = harness.mc_reject_rate(TestHandle("inter", 400, 0.1), theta, 1.0, cfg)
        assert rep.estimate <= level_bound(0.1, 1000)


class TestCombined:
    def test_fires_in_fixed_order(self):
        y = np.zeros(500)
        y[:30] = 40.0
        v = tkv.test_combined(y, 5, 0.1, 1.0)
        assert v.fired_by == "HC-cap"
        # HC rows come before the bulk row
        tags = [r.sub_test for r in v.diagnostics]
        assert tags.index("Bulk") > tags.index("HC")

    def test_inter_branch(self):
        v = tkv.test_combined(np.zeros(400), 399, 0.1, 1.0)
        assert "Inter" not in {r.sub_test for r in v.diagnostics}
        n = 100
        v = tkv.test_combined(np.zeros(n), 0, 0.1, 1.0)
        assert {r.sub_test for r in v.diagnostics} == {"HC-cap", "HC", "Bulk"}
        v = tkv.test_combined(np.zeros(2000), 1000, 0.1, 1.0)
        assert "Inter" in {r.sub_test for r in v.diagnostics}

    def test_csv(self):
        text = tkv.test_combined(np.zeros(50), 0, 0.1, 1.0).to_csv()
        assert text.splitlines()[0] == "sub_test,param,statistic,threshold,reject"

    def test_verdict_invariant(self):
        with pytest.raises(ValueError):
            tkv.TestVerdict(True, None)
