import math

import mpmath as mp
import numpy as np
import pytest

from rrtgard.errors import DomainError
from rrtgard.gard import FullTrace, gard_run
from rrtgard.linalg import RegressionProblem
from rrtgard.numerics import beta_cdf
from rrtgard.rrt import (Constant, Exponential, InverseLog, InversePoly, RrtConfig,
                         SuperExponential, asymptotic_dims, gamma_asymptotics, gamma_at,
                         required_alpha, rrt_from_trace, rrt_gard, rrt_gard_multi,
                         rrt_threshold_table, select_k_rrt)


def mp_gamma(n, p, k, k_max, alpha):
    """Gamma(k) by bisection on mpmath's regularized incomplete Beta."""
    a, q = mp.mpf(n - p - k) / 2, mp.mpf(alpha) / (k_max * (n - k + 1))
    lo, hi = mp.mpf(0), mp.mpf(1)
    for _ in range(120):
        mid = (lo + hi) / 2
        if mp.betainc(a, 0.5, 0, mid, regularized=True) < q:
            lo = mid
        else:
            hi = mid
    return float(mp.sqrt((lo + hi) / 2))


def problem(seed=0, n=50, p=5, k_g=4, sigma=1.0):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, p))
    beta = r.normal(size=p)
    S = sorted(r.choice(n, size=k_g, replace=False).tolist())
    g = np.zeros(n)
    g[S] = 10.0 * r.choice([-1, 1], size=k_g)
    return RegressionProblem(X @ beta + g + sigma * r.normal(size=n), X), beta, S


class TestThresholdTable:
    def test_value_against_bisection(self):
        tab = rrt_threshold_table(50, 10, RrtConfig(0.1))
        assert tab.k_max == 39
        assert tab.at(5) == pytest.approx(mp_gamma(50, 10, 5, 39, 0.1), rel=1e-10)

    def test_alpha_zero(self):
        tab = rrt_threshold_table(30, 3, RrtConfig(0.0))
        assert np.all(tab.gamma == 0.0)

    def test_alpha_at_boundary_gives_one(self):
        n, p, k = 30, 3, 7
        k_max = n - p - 1
        tab = rrt_threshold_table(n, p, RrtConfig(k_max * (n - k + 1)))
        assert tab.at(k) == 1.0
        assert tab.at(k - 1) < 1.0

    def test_monotone_in_alpha(self):
        g1 = rrt_threshold_table(60, 5, RrtConfig(0.01)).gamma
        g2 = rrt_threshold_table(60, 5, RrtConfig(0.1)).gamma
        assert np.all(g1 < g2)

    def test_k_max_validation(self):
        with pytest.raises(DomainError):
            rrt_threshold_table(20, 5, RrtConfig(0.1, k_max=15))
        with pytest.raises(DomainError):
            RrtConfig(-0.1)

    def test_table_is_read_only(self):
        tab = rrt_threshold_table(20, 2, RrtConfig(0.1))
        with pytest.raises(ValueError):
            tab.gamma[0] = 0.5


class TestSelect:
    def test_single_dip(self):
        tab = rrt_threshold_table(50, 10, RrtConfig(0.1))
        rr = np.ones(tab.k_max)
        rr[4] = 0.05
        sel = select_k_rrt(rr, tab)
        assert sel.k_rrt == 5 and not sel.fallback_engaged and sel.alpha_used == 0.1

    def test_last_crossing_wins(self):
        tab = rrt_threshold_table(50, 10, RrtConfig(0.1))
        rr = np.ones(tab.k_max)
        rr[[2, 8]] = 0.05
        assert select_k_rrt(rr, tab).k_rrt == 9

    def test_fallback_all_ones(self):
        n, p = 40, 4
        tab = rrt_threshold_table(n, p, RrtConfig(0.1))
        k_max = tab.k_max
        sel = select_k_rrt(np.ones(k_max), tab)
        assert sel.fallback_engaged
        # alpha_k = k_max (n - k + 1) F(1) is smallest at k = k_max
        assert sel.alpha_used == pytest.approx(k_max * (n - k_max + 1), rel=1e-9)
        assert sel.k_rrt == k_max

    def test_fallback_uses_closed_form_minimum(self):
        n, p = 40, 4
        tab = rrt_threshold_table(n, p, RrtConfig(1e-8))
        rr = np.full(tab.k_max, 0.97)
        rr[6] = 0.6
        need = [required_alpha(rr[k - 1], n, p, k, tab.k_max) for k in range(1, tab.k_max + 1)]
        sel = select_k_rrt(rr, tab)
        if min(need) > 1e-8:
            assert sel.fallback_engaged
            assert sel.alpha_used == pytest.approx(min(need), rel=1e-9)
            assert sel.k_rrt == int(np.argmin(need)) + 1

    def test_required_alpha_inverts_gamma(self):
        n, p, k = 60, 5, 9
        k_max = n - p - 1
        alpha = 0.07
        g = rrt_threshold_table(n, p, RrtConfig(alpha)).at(k)
        assert required_alpha(g, n, p, k, k_max) == pytest.approx(alpha, rel=1e-9)

    def test_padded_entries_never_cross(self):
        tab = rrt_threshold_table(30, 3, RrtConfig(0.1))
        rr = np.ones(tab.k_max)
        rr[1] = 0.01
        rr[10:] = 0.0  # would cross, but lies past the valid prefix
        assert select_k_rrt(rr, tab, n_valid=10).k_rrt == 2

    def test_saturated_run_collapses_to_onset(self):
        tab = rrt_threshold_table(30, 3, RrtConfig(0.1))
        rr = np.ones(tab.k_max)
        sat = np.zeros(tab.k_max, dtype=bool)
        rr[3] = 0.0   # RR(4): residual vanished at step 4
        rr[4:] = 0.0
        sat[4:] = True
        sel = select_k_rrt(rr, tab, saturated=sat)
        assert sel.k_rrt == 4 and sel.collapsed_saturation

    def test_length_mismatch(self):
        tab = rrt_threshold_table(30, 3, RrtConfig(0.1))
        with pytest.raises(DomainError):
            select_k_rrt(np.ones(3), tab)


class TestRrtGard:
    def test_noiseless_recovers_support(self):
        prob, beta, S = problem(1, sigma=0.0)
        est = rrt_gard(prob)
        assert set(est.support) == set(S)
        assert np.allclose(est.beta_hat, beta, atol=1e-8)

    def test_low_noise_recovers_support(self):
        hits = 0
        for seed in range(30):
            prob, _, S = problem(seed, n=80, sigma=0.1)
            hits += set(rrt_gard(prob).support) == set(S)
        assert hits >= 25

    def test_metadata(self):
        prob, *_ = problem(2)
        est = rrt_gard(prob, RrtConfig(0.2))
        m = est.method
        assert m["name"] == "rrt-gard" and m["alpha"] == 0.2 and m["sigma_source"] == "none"
        assert m["k_rrt"] == len(est.support)
        assert m["k_max"] == prob.n - prob.p - 1

    def test_multi_matches_single(self):
        prob, *_ = problem(3)
        multi = rrt_gard_multi(prob, [0.01, 0.1, 0.5])
        for a, est in zip([0.01, 0.1, 0.5], multi):
            single = rrt_gard(prob, RrtConfig(a))
            assert np.array_equal(single.beta_hat, est.beta_hat)
            assert single.support == est.support

    def test_from_trace_needs_full_trace(self):
        from rrtgard.gard import FixedSparsity
        prob, *_ = problem(4)
        with pytest.raises(DomainError):
            rrt_from_trace(prob, gard_run(prob, FixedSparsity(2)), [0.1])

    def test_residual_identity(self):
        prob, *_ = problem(5)
        est = rrt_gard(prob)
        recon = prob.y - prob.X @ est.beta_hat - est.g_hat
        assert np.allclose(est.residual, recon, atol=1e-8 * np.linalg.norm(prob.y))


class TestAsymptotics:
    def test_dims(self):
        assert asymptotic_dims(1000, 0.4) == (200, 200)
        assert asymptotic_dims(100, 0.0) == (2, 2)
        with pytest.raises(DomainError):
            asymptotic_dims(100, 1.0)

    def test_constant_alpha_increases_towards_one(self):
        for d in (0.0, 0.4, 0.8):
            g = [v for _, v in gamma_asymptotics(Constant(0.1), d, (100, 1000, 10000))]
            assert g[0] < g[1] < g[2] < 1.0

    def test_exponential_limit(self):
        # Gamma^2 -> exp(2 alpha_lim / (1 - d_lim)), here exp(-1)
        (_, g), = gamma_asymptotics(Exponential(-0.5), 0.0, (10000,))
        assert abs(g - math.exp(-0.5)) / math.exp(-0.5) < 0.02

    def test_super_exponential_collapses(self):
        (_, g), = gamma_asymptotics(SuperExponential(100.0), 0.0, (1000,))
        assert g < 0.05

    def test_slow_decay_rules_still_approach_one(self):
        for rule in (InverseLog(), InversePoly(1.0)):
            g = [v for _, v in gamma_asymptotics(rule, 0.0, (100, 1000, 10000))]
            assert g[0] < g[1] < g[2]

    def test_gamma_at_matches_table(self):
        tab = rrt_threshold_table(80, 6, RrtConfig(0.1))
        assert gamma_at(80, 6, 12, math.log(0.1)) == pytest.approx(tab.at(12), rel=1e-12)
