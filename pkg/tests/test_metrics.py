import numpy as np
import pytest

from hknoise import DomainError, Population
from hknoise.metrics import (
    DiffSeries,
    c_alpha1,
    c_alpha3,
    c_eta2,
    comm_global_threshold,
    constants,
    empirical_survival,
    estimate_limits,
    h_matrix,
    hitting_time,
    max_diff,
    quasi_sync_verdict,
    stopping_times,
    switching_threshold,
    tail_estimate,
    tail_estimate_from_samples,
    comm_band_bound,
    comm_band_threshold,
    w_underline,
)

FIG_POP = Population(np.linspace(0.05, 0.45, 20))


class TestDiameter:
    def test_example(self):
        assert max_diff([0.1, 0.35, 0.3]) == pytest.approx(0.25, abs=1e-15)

    def test_consensus(self):
        assert max_diff([0.4] * 6) == 0.0


class TestDiffSeries:
    def test_default_window_is_second_half(self):
        s = DiffSeries(np.linspace(0, 1, 101))
        assert s.window_start == 50
        est = estimate_limits(s)
        assert est.window == (50, 100)
        assert est.dbar_hat == 1.0 and est.dunder_hat == pytest.approx(0.5)

    def test_explicit_burn_in(self):
        est = estimate_limits(DiffSeries(np.array([0.9, 0.1, 0.2, 0.3]), burn_in=1))
        assert (est.dunder_hat, est.dbar_hat) == (0.1, 0.3)

    def test_validation(self):
        with pytest.raises(DomainError):
            DiffSeries(np.array([]))
        with pytest.raises(DomainError):
            DiffSeries(np.array([0.1, 1.2]))
        with pytest.raises(DomainError):
            estimate_limits(DiffSeries(np.array([0.1, 0.2]), burn_in=5))


class TestQuasiSync:
    def test_consensus_series(self):
        s = DiffSeries(np.zeros(10))
        verdict, tau = quasi_sync_verdict(s, estimate_limits(s), FIG_POP, 0.025)
        assert verdict and tau == 0

    def test_never_synchronized(self):
        s = DiffSeries(np.ones(10))
        verdict, tau = quasi_sync_verdict(s, estimate_limits(s), FIG_POP, 0.1)
        assert not verdict and tau is None

    def test_hitting_time(self):
        assert hitting_time([0.5, 0.3, 0.04, 0.6], 0.05) == 2
        assert hitting_time([0.5, 0.3], 0.05) is None


class TestStoppingTimes:
    def test_example(self):
        st = stopping_times(np.array([0.5, 0.03, 0.7, 0.2]), 0.05, 0.6)
        assert list(st.taus[:3]) == [0, 1, 2]

    def test_never_low(self):
        st = stopping_times(np.full(20, 0.5), 0.05, 0.6)
        assert list(st.taus) == [0] and st.censored

    def test_consecutive_gaps_of_one(self):
        d = np.array([0.5, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.3])
        st = stopping_times(d, 0.05, 0.6)
        assert list(st.gaps) == [1] * 6
        assert st.n_cycles == 3

    def test_tau0_not_reused(self):
        # d(0) below alpha does not count: tau_1 > tau_0
        st = stopping_times(np.array([0.0, 0.5, 0.01]), 0.05, 0.6)
        assert list(st.taus) == [0, 2]

    def test_alpha_not_below_c(self):
        with pytest.raises(DomainError):
            stopping_times(np.zeros(3), 0.6, 0.6)

    def test_alternation(self):
        rng = np.random.default_rng(0)
        d = rng.random(5000)
        st = stopping_times(DiffSeries(d), 0.1, 0.9)
        assert np.all(np.diff(st.taus) > 0)
        for k, t in enumerate(st.taus[1:], start=1):
            assert d[t] <= 0.1 if k % 2 else d[t] >= 0.9


class TestTail:
    def test_degenerate_gaps(self):
        t, s = empirical_survival(np.full(30, 4))
        assert list(s) == [1, 1, 1, 1, 0]

    def test_geometric_rate_recovered(self):
        rng = np.random.default_rng(42)
        p = 0.05
        gaps = rng.geometric(p, size=1000)
        est = tail_estimate_from_samples(gaps)
        target = -np.log(1 - p)
        assert abs(est.geo_rate_hat - target) <= 0.2 * target
        assert est.r_squared > 0.9

    def test_survival_monotone(self):
        rng = np.random.default_rng(1)
        _, s = empirical_survival(rng.integers(1, 50, size=300))
        assert np.all(np.diff(s) <= 0) and s[0] <= 1 and s[-1] >= 0

    def test_too_few(self):
        with pytest.raises(DomainError):
            tail_estimate_from_samples([3])

    def test_censoring_counted(self):
        d = np.tile([0.5, 0.0, 1.0, 1.0], 50)
        est = tail_estimate(stopping_times(d, 0.05, 0.6))
        assert est.n_censored == 1
        assert est.n_gaps == 100


class TestConstants:
    def test_c_alpha1_supercritical(self):
        assert c_alpha1(0.1, 0.01, FIG_POP) == 1.0

    def test_c_alpha1_subcritical(self):
        assert c_alpha1(0.025, 0.01, FIG_POP) == pytest.approx(0.04)

    def test_c_eta2_example(self):
        pop = Population(np.linspace(0.05, 0.45, 20), 0.1)
        assert c_eta2(0.1, pop) == pytest.approx(20 * 0.1 / (19 * 0.1))
        assert c_eta2(0.1, pop) == pytest.approx(1.0526, abs=1e-4)

    def test_c_eta2_domain(self):
        with pytest.raises(DomainError):
            c_eta2(0.025, FIG_POP)

    def test_c_alpha3_branches(self):
        pop = Population(np.linspace(0.05, 0.45, 20), 0.1)
        assert c_alpha3(0.025, 0.01, pop) == pytest.approx(0.04)
        assert c_alpha3(0.1, 0.01, pop) == 1.0

    def test_w_underline(self):
        pop = Population([0.1, 0.3, 0.5], [0.4, 0.2, 0.1])
        assert w_underline(0.1, pop) == 0.4
        assert w_underline(0.2, pop) == 0.2
        with pytest.raises(DomainError):
            w_underline(0.04, pop)

    def test_h_example(self):
        pop = Population([0.5, 0.6, 0.7], [0.1, 0.2, 0.3])
        pc = h_matrix(0.3, pop)
        np.testing.assert_allclose(pc.a, [0.18, 0.16, 0.14])
        assert pc.A[0, 1] == pytest.approx(0.34)
        assert pc.H[0, 1] == pytest.approx(0.2 * (0.9 + 0.1 / 3))
        assert pc.H[0, 1] == pytest.approx(0.18667, abs=1e-5)
        assert np.isnan(pc.H[0, 0])

    def test_symmetric_omega_drops_correction(self):
        n, eta, w = 5, 0.2, 0.3
        for r in (0.05, 0.2, 0.9):
            pc = h_matrix(eta, Population([r] * n, w))
            a = (n - 1) * (1 - w) * eta / n
            if r < a:
                expected = (n - 1) * eta / n * (1 - w) ** 2
            elif r < 2 * a:
                expected = (1 - w) * eta * ((1 - w) / n + (n - 2) / (n - 1))
            else:
                expected = (n - 1) * eta / n * (1 - w)
            assert pc.H[0, 1] == pytest.approx(expected)

    def test_large_n_pair_limit(self):
        w, eta = 0.2, 0.1
        pc = h_matrix(eta, Population([0.5] * 2000, w))
        assert pc.A[0, 1] == pytest.approx(2 * (1 - w) * eta, rel=1e-3)

    def test_comm_band_constants(self):
        assert comm_band_bound(0.1, 4) == pytest.approx(0.15)
        assert comm_band_threshold(1 / 3, 4) == pytest.approx(4 / 18)

    def test_comm_global_threshold(self):
        pop = Population([0.5, 0.6, 0.7], [0.1, 0.2, 0.3])
        expected = min(3 * pop.r[i] / (2 * (2 - pop.omega[i] - pop.omega[j])) for i in range(3) for j in range(3) if i != j)
        assert comm_global_threshold(pop) == pytest.approx(expected)

    def test_switching_threshold_variants(self):
        pop = Population([1 / 3] * 4)
        assert switching_threshold("CommNoise", 0.1, 0.01, pop) == pytest.approx(0.14)
        assert switching_threshold("CommNoise", 0.25, 0.01, pop) == 1.0
        assert switching_threshold("EnvNoise", 0.025, 0.01, FIG_POP) == pytest.approx(0.04)

    def test_bundle(self):
        c = constants(0.1, 0.01, FIG_POP).as_dict()
        assert c["c_alpha1"] == 1.0 and c["r_min"] == 0.05
        assert constants(0.02, 0.01, FIG_POP).c_eta2 is None
