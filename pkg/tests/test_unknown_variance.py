import math

import numpy as np
import pytest

import sparsity_minimax.tests_kv as tkv
import sparsity_minimax.tests_uv as tuv
from sparsity_minimax import harness, kernels
from sparsity_minimax.errors import DegenerateInput, DomainError, MissingCalibration
from sparsity_minimax.harness import MCConfig, TestHandle
from sparsity_minimax.model import BandNoise, KnownNoise, RngStream

BAND = BandNoise(0.5, 1.0)


def level_bound(alpha, reps, extra=0.0):
    return alpha + extra + 3.0 * math.sqrt(alpha * (1 - alpha) / reps)


class TestVarianceEstimate:
    def test_frequency_examples(self):
        assert tuv.variance_frequency(0, 100, 1.0) == pytest.approx(math.sqrt(2))
        assert tuv.variance_frequency(1000, 10 ** 4, 1.0) == pytest.approx(2.189929347170073, abs=1e-12)
        assert tuv.variance_frequency(1000, 10 ** 4, 2.0) == pytest.approx(
            tuv.variance_frequency(1000, 10 ** 4, 1.0) / 2)

    def test_inversion_identity(self):
        # two points at +-c have empirical CF cos(c v); pick c so that it equals exp(-v^2/2)
        v = 1.3
        c = math.acos(math.exp(-v * v / 2)) / v
        est = tuv.sigma_hat2(np.array([c, -c]), v)
        assert est.sigma2_hat == pytest.approx(1.0, rel=1e-12) and not est.clamped

    def test_consistency(self):
        y = RngStream(5, 0).normal(10 ** 5)
        assert tuv.sigma_hat2(y, math.sqrt(2)).sigma2_hat == pytest.approx(1.0, abs=0.02)

    def test_clamp(self):
        v = 1.0
        est = tuv.sigma_hat2(np.array([math.pi]), v)
        assert est.clamped and math.isfinite(est.sigma2_hat) and est.sigma2_hat > 0

    def test_scale_covariance(self):
        y = RngStream(6, 0).normal(500)
        c = 3.0
        a = tuv.sigma_hat2(c * y, 0.7 / c).sigma2_hat
        b = tuv.sigma_hat2(y, 0.7).sigma2_hat
        assert a == pytest.approx(c * c * b, rel=1e-12)


class TestHcVar:
    def test_t_star(self):
        assert tuv.hc_var_t_star(500, 0.1) == math.ceil(2 * math.sqrt(2 * math.log(20000)))

    def test_variance_term_vanishes_at_zero(self):
        t = np.arange(1, 6)
        base = tuv.hc_var_threshold(t, 0.1, 500, 0, BAND)
        more = tuv.hc_var_threshold(t, 0.1, 500, 10, BAND)
        assert np.all(more > base)

    def test_dominates_known_variance_allowance(self):
        t = np.arange(1, 10)
        assert np.all(tuv.hc_var_threshold(t, 0.1, 500, 10, BAND) >= tkv.hc_threshold(t, 0.1, 500))

    def test_band_required(self):
        with pytest.raises(DomainError):
            tuv.test_hc_var(np.zeros(10), 0, 0.1, KnownNoise(1.0))

    def test_cap_power(self):
        n, k0 = 500, 10
        theta = np.zeros(n)
        theta[:k0 + 1] = 10 * BAND.sigma_hi * math.sqrt(math.log(n))
        rep = harness.mc_reject_rate(TestHandle("hc_var", k0, 0.1, BAND), theta, 1.0, MCConfig(50, 1))
        assert rep.estimate >= 0.9

    @pytest.mark.parametrize("sigma", [0.5, 1.0])
    def test_level(self, sigma):
        rep = harness.mc_reject_rate(TestHandle("hc_var", 10, 0.1, BAND), np.zeros(500), sigma,
                                     MCConfig(1000, 21))
        assert rep.estimate <= level_bound(0.1, 1000)


class TestBulkVar:
    def test_scale_examples(self):
        assert tuv.bulk_var_scale(100, 10 ** 4) == 1.0
        assert tuv.bulk_var_scale(101, 10 ** 4) == pytest.approx(1.0, abs=1e-2)
        # independently evaluated; the figure 1.8195 quoted elsewhere is off in the third digit
        assert tuv.bulk_var_scale(1000, 10 ** 4) == pytest.approx(1.817301596597011, abs=1e-12)

    def test_weights_orthogonal_to_square(self):
        u = tuv._SIMPSON_U
        assert abs(np.dot(tuv._BULK_WEIGHTS, u * u)) < 1e-12
        assert np.sum(tuv._SIMPSON_W) == pytest.approx(1.0, abs=1e-15)

    def test_zero_vector(self):
        assert tuv.stat_bulk_var(np.zeros(100), 1.5, 1.0) == 0.0

    def test_threshold_constants(self):
        k0, n, alpha = 50, 1000, 0.1
        expected = (1.09 * 50 + 16 * 2500 / 1000
                    + 4 * math.sqrt(math.e) * max(math.sqrt(50 * math.sqrt(1000)), math.sqrt(1000))
                    * math.sqrt(math.log(20)))
        assert tuv.bulk_var_threshold(k0, alpha, n) == pytest.approx(expected, rel=1e-15)

    def test_population_heuristic(self):
        n = 10 ** 4
        theta = np.zeros(n)
        theta[:100] = 3.0
        s = 1.2
        vals = [tuv.stat_bulk_var(theta + RngStream(31, r).normal(n), s, 1.0) for r in range(200)]
        oracle = float(np.sum(kernels.bulk_var_kernel(s * theta)))
        # log(1 - x) ~ -x costs about x^2 / 2 per node; 2% covers it at this sparsity
        assert abs(np.mean(vals) - oracle) <= 4 * np.std(vals, ddof=1) / math.sqrt(200) + 0.02 * oracle

    def test_level(self):
        rep = harness.mc_reject_rate(TestHandle("bulk_var", 50, 0.1, BAND), np.zeros(1000), 1.0,
                                     MCConfig(1000, 22))
        assert rep.estimate <= level_bound(0.1, 1000)

    def test_dense_power(self):
        n = 1000
        theta = np.zeros(n)
        theta[:500] = 6.0
        s = tuv.bulk_var_scale(0, n)
        margin = np.sum(np.minimum((s * theta / BAND.sigma_hi) ** 4, 1.0)) / math.sqrt(n)
        assert margin >= 15
        rep = harness.mc_reject_rate(TestHandle("bulk_var", 0, 0.1, BAND), theta, 1.0, MCConfig(100, 2))
        assert rep.estimate >= 0.9


class TestInterVar:
    def test_quarter_level_radius(self):
        k0, n = 640, 100
        dl = tkv.dyadic_l(k0, n)
        assert k0 // 4 in dl.levels
        r, w, coeffs = tuv.inter_var_params(k0, k0 // 4, n)
        assert r == pytest.approx(math.sqrt(16 * math.log(4)))
        r_kv, w_kv = tkv.inter_params(k0, k0 // 4, n)
        assert r / r_kv == pytest.approx(math.sqrt(8)) and w == w_kv
        assert coeffs.delta_l == pytest.approx(6.772610242106597e-05, rel=1e-9)

    def test_weights_orthogonal_to_square(self):
        r = 5.0
        coeffs = kernels.pl_coefficients(r)
        wts = tuv.inter_var_weights(r, coeffs)
        assert abs(np.dot(wts, tuv._IV_U ** 2)) < 1e-10

    def test_zero_vector(self):
        v = tuv.test_inter_var(np.zeros(2000), 1000, 0.1, BAND)
        assert not v.reject
        assert all(r.statistic == 0.0 for r in v.diagnostics)

    def test_applicability(self):
        with pytest.raises(DomainError):
            tuv.test_inter_var(np.zeros(100), 100, 0.1, BAND)


class TestTrim:
    def test_nothing_trimmed(self):
        y = np.full(10, 100.0)
        for seed in range(5):
            assert tuv.trim(y, 1.0, RngStream(seed, 0)).trimmed_indices.size == 0

    def test_huge_entry_always_trimmed(self):
        y = np.zeros(10)
        y[3] = 3 * 100.0
        for seed in range(5):
            tr = tuv.trim(y, 1.0, RngStream(seed, 0), k0=2)
            assert list(tr.trimmed_indices) == [3] and tr.residual_k0 == 1

    def test_deterministic(self):
        y = np.linspace(-1, 1, 9)
        a = tuv.trim(y, 1.0, RngStream(4, 2))
        b = tuv.trim(y, 1.0, RngStream(4, 2))
        assert a.u_draw == b.u_draw and a.threshold == b.threshold


class TestCombinedVar:
    def test_spike_rejects_outright(self):
        y = np.zeros(100)
        y[0] = 10 * 100 ** 2
        v = tuv.test_combined_var(y, 0, 0.1, BAND, RngStream(0, 0))
        assert v.reject and v.fired_by == "Trim"

    def test_agrees_with_untrimmed_rows(self):
        y = RngStream(9, 0).normal(500)
        v = tuv.test_combined_var(y, 10, 0.1, BAND, RngStream(9, 1))
        rows, _ = tuv._hc_var_rows(y, 10, 0.05, BAND)
        assert v.diagnostics[1:len(rows) + 1] == rows

    def test_level_zero(self):
        rep = harness.mc_reject_rate(TestHandle("combined_var", 0, 0.1, BAND), np.zeros(500), 1.0,
                                     MCConfig(1000, 23))
        assert rep.estimate <= level_bound(0.1, 1000, 0.02)

    def test_degenerate_flag(self):
        y = np.array([math.pi, -math.pi] * 10)
        v = tuv.test_bulk_var(y, 0, 0.1, BandNoise(0.5, 1.0 / 1.0))
        assert "degenerate-CF" in v.flags or all(r.statistic == r.statistic for r in v.diagnostics)


class TestS4:
    def test_flat_vector(self):
        assert tuv.stat_s4(np.array([2.0, -2.0, 2.0, -2.0])) == pytest.approx(-2.0, abs=1e-15)

    def test_scale_invariance(self):
        y = RngStream(1, 0).normal(1000)
        assert tuv.stat_s4(4.0 * y) == tuv.stat_s4(y)

    def test_zero_vector(self):
        with pytest.raises(DegenerateInput):
            tuv.stat_s4(np.zeros(5))

    @pytest.mark.xfail(strict=True, reason="the null spread of S4 is sqrt(24/n), about 4.9/sqrt(n), "
                       "so a 5/sqrt(n) band holds in roughly 68% of draws, not 99%")
    def test_null_band_five_over_root_n(self):
        n = 10 ** 5
        vals = [tuv.stat_s4(RngStream(2, r).normal(n)) for r in range(200)]
        assert np.mean(np.abs(vals) <= 5 / math.sqrt(n)) >= 0.99

    def test_null_spread(self):
        n = 10 ** 5
        vals = np.array([tuv.stat_s4(RngStream(2, r).normal(n)) for r in range(200)])
        assert np.std(vals, ddof=1) * math.sqrt(n) == pytest.approx(math.sqrt(24), rel=0.15)
        # two-sided 99% normal band
        assert np.mean(np.abs(vals) <= 2.576 * math.sqrt(24 / n) * 1.1) >= 0.98
        assert abs(np.mean(vals)) <= 5 / math.sqrt(n)

    def test_missing_calibration(self):
        with pytest.raises(MissingCalibration):
            tuv.test_s4(np.ones(10), 0.1, tuv.S4Calibration())

    def test_calibration_round_trip_and_monotone(self, tmp_path, monkeypatch):
        monkeypatch.setenv(tuv.CACHE_ENV, str(tmp_path))
        table = tuv.s4_calibration(200, 0.1, reps=400, seed=1)
        table = tuv.s4_calibration(200, 0.2, reps=400, seed=1)
        loaded = tuv.S4Calibration.load(tmp_path / "s4_calibration.csv")
        assert loaded.quantile(200, 0.1) == table.quantile(200, 0.1)
        assert loaded.quantile(200, 0.2) < loaded.quantile(200, 0.1)

    def test_null_size(self):
        n, gamma = 300, 0.2
        table = tuv.calibrate_s4(n, gamma, reps=4000, seed=5)
        rej = [tuv.test_s4(RngStream(6, r).normal(n), gamma, table).reject for r in range(1000)]
        p = gamma / 2
        assert abs(np.mean(rej) - p) <= 3 * math.sqrt(p * (1 - p) / 1000) + 3 * math.sqrt(p * (1 - p) / 4000)

    def test_dense_power(self):
        n = 10 ** 4
        table = tuv.calibrate_s4(n, 0.1, reps=500, seed=3)
        theta = np.zeros(n)
        theta[: n // 10] = 2.0
        assert np.sum(theta ** 4) >= 16 * math.sqrt(n)
        rej = [tuv.test_s4(theta + RngStream(7, r).normal(n), 0.1, table).reject for r in range(50)]
        assert np.mean(rej) >= 0.9


class TestSigmaBand:
    def test_constant(self):
        b = tuv.sigma_band(np.full(10, 3.0))
        assert b.sigma_bar2 == pytest.approx(9.0)
        assert b.hi / b.lo == pytest.approx(35.2)

    def test_literal_ratio(self):
        b = tuv.sigma_band(np.full(10, 3.0), convention="literal")
        assert b.hi / b.lo == pytest.approx(35.2)

    def test_null_coverage(self):
        hits = 0
        for r in range(1000):
            b = tuv.sigma_band(RngStream(8, r).normal(1000))
            hits += b.lo <= 1.0 <= b.hi
        assert hits >= 990

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            tuv.sigma_band(np.array([0.0, 0.0, 0.0, 5.0]))
