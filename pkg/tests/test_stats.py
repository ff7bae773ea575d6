"""Tests for the statistics helpers."""

import numpy as np
import pytest
from scipy.stats import norm

from slelab.errors import TooFewSamples
from slelab.stats import (
    EmpiricalDistribution,
    convergence_order,
    ks_one_sample,
    ks_two_sample,
    mc_mean_se,
)


class TestKsOneSample:
    def test_null_calibration(self):
        rng = np.random.default_rng(0)
        low = 0
        for _ in range(200):
            s = rng.standard_normal(200)
            if ks_one_sample(s, norm.cdf).p_value <= 0.001:
                low += 1
        assert low <= 1

    def test_constant_samples(self):
        r = ks_one_sample(np.zeros(50), norm.cdf)
        assert r.statistic >= 0.5

    def test_statistic_magnitude(self):
        rng = np.random.default_rng(3)
        r = ks_one_sample(rng.standard_normal(2000), norm.cdf)
        assert r.statistic < 0.04

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            ks_one_sample(np.arange(5), norm.cdf)

    def test_matches_scipy(self):
        from scipy.stats import kstest

        rng = np.random.default_rng(11)
        s = rng.standard_normal(500)
        mine = ks_one_sample(s, norm.cdf)
        ref = kstest(s, norm.cdf)
        assert mine.statistic == pytest.approx(ref.statistic, abs=1e-12)
        assert mine.p_value == pytest.approx(ref.pvalue, abs=0.02)


class TestKsTwoSample:
    def test_identical(self):
        a = np.linspace(0, 1, 100)
        r = ks_two_sample(a, a)
        assert r.statistic == 0.0
        assert r.p_value == pytest.approx(1.0)

    def test_disjoint(self):
        r = ks_two_sample(np.arange(50), np.arange(100, 150))
        assert r.statistic == 1.0
        assert r.p_value < 1e-10

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal(300), rng.standard_normal(400) + 0.1
        assert ks_two_sample(a, b).statistic == ks_two_sample(b, a).statistic

    def test_equal_law(self):
        rng = np.random.default_rng(8)
        a, b = rng.standard_normal(1000), rng.standard_normal(1000)
        assert ks_two_sample(a, b).p_value > 0.01

    def test_bounds(self):
        rng = np.random.default_rng(9)
        r = ks_two_sample(rng.standard_normal(100), rng.standard_normal(80))
        assert 0 <= r.statistic <= 1
        assert 0 <= r.p_value <= 1


class TestMcMeanSe:
    def test_constant(self):
        assert mc_mean_se([1.0, 1.0, 1.0]) == (1.0, 0.0)

    def test_alternating(self):
        v = np.tile([1.0, -1.0], 50)
        mean, se = mc_mean_se(v)
        assert mean == 0.0
        assert se == pytest.approx(0.1, rel=0.02)

    def test_uniform(self):
        rng = np.random.default_rng(2)
        mean, se = mc_mean_se(rng.uniform(size=10_000))
        assert abs(mean - 0.5) < 3 * se


class TestConvergenceOrder:
    def test_first_order(self):
        assert convergence_order([4.0, 2.0, 1.0]) == pytest.approx(1.0)

    def test_second_order(self):
        assert convergence_order([16.0, 4.0, 1.0]) == pytest.approx(2.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            convergence_order([1.0, 0.0, 0.1])


class TestEmpiricalDistribution:
    def test_cdf_steps(self):
        d = EmpiricalDistribution([3.0, 1.0, 2.0])
        assert d.cdf(0.5) == 0.0
        assert d.cdf(1.0) == pytest.approx(1 / 3)
        assert d.cdf(10.0) == 1.0

    def test_weighted(self):
        d = EmpiricalDistribution([1.0, 2.0], weights=[1.0, 3.0])
        assert d.cdf(1.5) == pytest.approx(0.25)
