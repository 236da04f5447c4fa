"""Tests for the expected-hull and floating-body oracles, certification and inclusion estimates"""
import math

import numpy as np
import pytest

from bodies import (
    ExpectedHullOracle,
    FloatingBodyOracle,
    certification_net,
    certify_sandwich,
    inclusion_probability,
    resolve_delta,
    sandwich_bruteforce,
    theorem1_delta,
    wilson_interval,
)
from distributions import GaussianModel, NormalLaw, UniformBoxModel, directional_law, make_rng
from errors import DomainError, NetMismatchError
from geometry import Polytope, random_directions, sphere_directions
from order_stats import expected_max


def circle_polytope(radius: float, count: int) -> Polytope:
    return Polytope(radius * sphere_directions(2, count))


class TestExpectedHull:
    def test_single_draw_has_zero_support(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 1)
        assert oracle.support([1.0, 0.0]) == pytest.approx(0.0, abs=1e-9)

    def test_gaussian_pair(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 2)
        assert oracle.support([0.0, 1.0]) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-9)

    def test_gaussian_scales_with_directional_sigma(self, gaussian_diag):
        oracle = ExpectedHullOracle(gaussian_diag, 100)
        e = expected_max(NormalLaw(), 100)
        assert oracle.support([1.0, 0.0]) == pytest.approx(2.0 * e, rel=1e-12)
        assert oracle.support([0.0, 3.0]) == pytest.approx(3.0 * e, rel=1e-12)

    def test_uniform_three(self, uniform_2d):
        oracle = ExpectedHullOracle(uniform_2d, 3)
        assert oracle.support([1.0, 0.0]) == pytest.approx(0.5, abs=1e-12)

    def test_zero_direction(self, gaussian_2d):
        with pytest.raises(DomainError):
            ExpectedHullOracle(gaussian_2d, 10).support([0.0, 0.0])

    def test_bad_mode(self, gaussian_2d):
        with pytest.raises(DomainError):
            ExpectedHullOracle(gaussian_2d, 10, mode="exact")

    def test_homogeneity(self, uniform_2d):
        oracle = ExpectedHullOracle(uniform_2d, 50)
        theta = np.array([0.4, -0.7])
        for c in (0.5, 2.0, 7.5):
            assert oracle.support(c * theta) == pytest.approx(c * oracle.support(theta), rel=1e-9)

    @pytest.mark.parametrize("model", [
        GaussianModel(np.diag([4.0, 1.0])),
        UniformBoxModel([1.0, 0.5]),
    ], ids=["gaussian-diag", "uniform-box"])
    def test_sublinear_and_positive(self, model):
        oracle = ExpectedHullOracle(model, 30)
        rng = make_rng(13)
        for _ in range(15):
            a, b = rng.standard_normal(2), rng.standard_normal(2)
            assert oracle.support(a + b) <= oracle.support(a) + oracle.support(b) + 1e-9
            assert oracle.support(a) > 0

    def test_support_many_matches_support(self, uniform_2d):
        oracle = ExpectedHullOracle(uniform_2d, 20)
        dirs = random_directions(2, 6, make_rng(2))
        many = oracle.support_many(dirs)
        assert np.allclose(many, [oracle.support(t) for t in dirs], rtol=1e-12)

    def test_direction_cache_is_bounded(self, uniform_2d):
        oracle = ExpectedHullOracle(uniform_2d, 20, cache_size=8)
        dirs = random_directions(2, 50, make_rng(5))
        values = oracle.support_many(dirs)
        assert oracle.cached_directions == 8
        fresh = ExpectedHullOracle(uniform_2d, 20, cache_size=0)
        assert np.allclose(values, fresh.support_many(dirs), rtol=1e-12)
        assert fresh.cached_directions == 0
        assert oracle.support(dirs[-1]) == pytest.approx(values[-1], rel=1e-12)
        assert oracle.cached_directions == 8

    def test_monte_carlo_agrees_with_analytic(self, gaussian_2d):
        analytic = ExpectedHullOracle(gaussian_2d, 1000)
        mc = ExpectedHullOracle(gaussian_2d, 1000, mode="mc", replicates=10_000, seed=99)
        dirs = random_directions(2, 100, make_rng(3))
        diff = np.abs(mc.support_many(dirs) - analytic.support_many(dirs))
        se = np.array([mc.standard_error(t) for t in dirs])
        assert np.all(se > 0)
        assert np.mean(diff <= 3.0 * se) >= 0.99
        assert np.all(diff <= 5.0 * se)


class TestFloatingBody:
    def test_gaussian_bound(self, gaussian_2d):
        oracle = FloatingBodyOracle(gaussian_2d, math.exp(-2.0))
        assert oracle.support([1.0, 0.0]) == pytest.approx(1.1015, abs=1e-4)

    def test_uniform_quarter(self, uniform_2d):
        assert FloatingBodyOracle(uniform_2d, 0.25).support([1.0, 0.0]) == pytest.approx(0.5)

    def test_homogeneous(self, gaussian_diag):
        oracle = FloatingBodyOracle(gaussian_diag, 0.1)
        theta = np.array([0.6, 0.3])
        assert oracle.support(2.0 * theta) == pytest.approx(2.0 * oracle.support(theta), rel=1e-12)

    @pytest.mark.parametrize("delta", [0.0, 0.5, math.exp(-1.0), -0.1])
    def test_delta_range(self, gaussian_2d, delta):
        with pytest.raises(DomainError):
            FloatingBodyOracle(gaussian_2d, delta)

    def test_halfspace_mass(self, uniform_2d):
        delta = 0.1
        oracle = FloatingBodyOracle(uniform_2d, delta)
        mass = oracle.halfspace_mass([0.6, 0.8], m=100_000, seed=4)
        assert abs(mass - (1.0 - delta)) <= 4.0 * math.sqrt(delta * (1.0 - delta) / 100_000)

    def test_bound_is_directional_quantile(self, uniform_2d):
        theta = np.array([1.0, 1.0]) / math.sqrt(2.0)
        oracle = FloatingBodyOracle(uniform_2d, 0.05)
        law = directional_law(uniform_2d, theta)
        assert law.sf(oracle.support(theta)) == pytest.approx(0.05, rel=1e-8)


class TestCertificate:
    @pytest.fixture
    def setup(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 1000)
        net = certification_net(oracle, 0.08, seed=1, candidate_budget=5000)
        radius = oracle.support([1.0, 0.0])
        return oracle, net, radius

    def test_delta_schedule(self):
        assert theorem1_delta(1000, 0.4, 2) == pytest.approx(3.0 * 1000 ** -0.05)
        delta, clamped = resolve_delta(1000, 0.4, 2)
        assert clamped and delta == pytest.approx(0.08)
        delta, clamped = resolve_delta(1000, 0.4, 2, override=0.01)
        assert not clamped and delta == 0.01

    def test_net_lies_on_polar_boundary(self, setup):
        oracle, net, _ = setup
        assert np.allclose(oracle.support_many(net.points), 1.0, atol=1e-9)

    def test_identical_support_certifies(self, setup):
        oracle, net, radius = setup
        # vertices at e_n * w / |w| give h_P(w) = 1 at every net point of the disc's polar
        units = net.points / np.linalg.norm(net.points, axis=1)[:, None]
        polytope = Polytope(radius * units)
        cert = certify_sandwich(polytope, oracle, 0.4, net)
        assert cert.certified
        assert cert.min_ratio == pytest.approx(1.0, abs=1e-9)
        assert cert.max_ratio == pytest.approx(1.0, abs=1e-9)

    def test_inflated_polytope_fails_everywhere(self, setup):
        oracle, net, radius = setup
        units = net.points / np.linalg.norm(net.points, axis=1)[:, None]
        polytope = Polytope((1.0 + 0.4) * radius * units)
        cert = certify_sandwich(polytope, oracle, 0.4, net)
        assert not cert.certified
        assert len(cert.failures) == net.size

    def test_delta_above_fifth_of_margin(self, setup):
        oracle, net, radius = setup
        with pytest.raises(DomainError):
            certify_sandwich(circle_polytope(radius, 64), oracle, 0.3, net)

    def test_margin_range(self, setup):
        oracle, net, radius = setup
        with pytest.raises(DomainError):
            certify_sandwich(circle_polytope(radius, 64), oracle, 0.5, net)

    def test_net_of_another_body(self, setup, gaussian_2d):
        _, net, radius = setup
        other = ExpectedHullOracle(gaussian_2d, 50)
        with pytest.raises(NetMismatchError):
            certify_sandwich(circle_polytope(radius, 64), other, 0.4, net)

    def test_origin_outside_polytope(self, setup):
        oracle, net, _ = setup
        cert = certify_sandwich(Polytope([[1.0, 1.0], [2.0, 1.0], [1.0, 2.0]]), oracle, 0.4, net)
        assert not cert.certified
        assert cert.reason == "origin not interior to P_n"


class TestBruteForce:
    def test_identical_body_has_tiny_defects(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 1000)
        radius = oracle.support([1.0, 0.0])
        p = circle_polytope(radius, 4096)
        defects = sandwich_bruteforce(p, oracle, m_dirs=10_000, seed=6)
        assert abs(defects.eps_out) <= 1e-5
        assert 0.0 <= defects.eps_in <= 1e-5

    def test_inflated_body(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 1000)
        radius = oracle.support([1.0, 0.0])
        p = circle_polytope(1.2 * radius, 4096)
        defects = sandwich_bruteforce(p, oracle, m_dirs=10_000, seed=6)
        assert defects.eps_out == pytest.approx(0.2, abs=1e-5)

    def test_needs_enough_directions(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 100)
        with pytest.raises(DomainError):
            sandwich_bruteforce(circle_polytope(1.0, 16), oracle, m_dirs=999)

    def test_one_dimension_uses_both_signs(self, uniform_1d):
        oracle = ExpectedHullOracle(uniform_1d, 3)
        p = Polytope([[-0.25], [0.75]])
        defects = sandwich_bruteforce(p, oracle)
        assert defects.eps_out == pytest.approx(0.5)
        assert defects.eps_in == pytest.approx(0.5)


class TestInclusion:
    def test_wilson_interval(self):
        lo, hi = wilson_interval(0, 10)
        assert lo == pytest.approx(0.0, abs=1e-12) and hi < 0.35
        lo, hi = wilson_interval(10, 10)
        assert hi == pytest.approx(1.0) and lo > 0.65
        lo, hi = wilson_interval(30, 100)
        assert lo < 0.3 < hi

    def test_one_dimension_is_exact_interval(self):
        model = GaussianModel(np.eye(1))
        oracle = ExpectedHullOracle(model, 100)
        est = inclusion_probability(model, oracle, 0.5, m=10_000, seed=8)
        e = oracle.support([1.0])
        exact = NormalLaw().cdf(1.5 * e) - NormalLaw().cdf(-1.5 * e)
        assert est.indeterminate == 0
        assert est.estimate >= 1.0 - 6.0 * 100 ** (-1.0 - 0.5 / 4.0)
        assert abs(est.estimate - exact) <= 4.0 * math.sqrt(exact * (1.0 - exact) / 10_000) + 1e-4

    def test_large_margin_contains_everything(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 100)
        est = inclusion_probability(gaussian_2d, oracle, 10.0, m=10_000, seed=9)
        assert est.estimate == 1.0
        assert est.certified_out == 0

    def test_monotone_in_margin(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 20)
        net = certification_net(oracle, 0.04, seed=3)
        small = inclusion_probability(gaussian_2d, oracle, 0.2, m=10_000, seed=10, net=net)
        large = inclusion_probability(gaussian_2d, oracle, 0.4, m=10_000, seed=10, net=net)
        assert small.estimate <= large.estimate
        assert small.ci_low <= small.estimate <= small.ci_high

    def test_needs_enough_draws(self, gaussian_2d):
        oracle = ExpectedHullOracle(gaussian_2d, 20)
        with pytest.raises(DomainError):
            inclusion_probability(gaussian_2d, oracle, 0.5, m=9_999)
