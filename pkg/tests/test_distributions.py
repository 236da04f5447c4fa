"""Tests for the distribution catalog: sampling, directional laws and model checks"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from distributions import (
    EmpiricalLaw,
    GaussianModel,
    LaplaceLaw,
    LaplaceProductModel,
    ModelSpec,
    NormalLaw,
    ShiftedExponentialLaw,
    UniformBoxModel,
    UniformSumLaw,
    build_model,
    derive_seed,
    directional_law,
    parse_law_spec,
    parse_model_string,
    sample,
    spec_dim,
    validate_model,
)
from errors import DomainError, ModelError

ANALYTIC_LAWS = [
    NormalLaw(1.0),
    NormalLaw(2.5),
    UniformSumLaw([1.0]),
    UniformSumLaw([1.0, 0.5]),
    UniformSumLaw([0.3, 0.7, 1.1]),
    ShiftedExponentialLaw(1.0),
    LaplaceLaw(1.0),
]


class TestSampling:
    def test_same_seed_same_bytes(self, gaussian_2d):
        a = sample(gaussian_2d, 3, seed=7)
        b = sample(gaussian_2d, 3, seed=7)
        assert a.shape == (3, 2)
        assert a.tobytes() == b.tobytes()

    def test_different_seeds_differ(self, gaussian_2d):
        assert not np.array_equal(sample(gaussian_2d, 5, 1), sample(gaussian_2d, 5, 2))

    def test_uniform_box_is_centred(self, uniform_2d):
        x = sample(uniform_2d, 100_000, seed=1)
        assert np.all(np.abs(x.mean(axis=0)) < 0.02)
        assert np.all(np.abs(x) <= 1.0)

    def test_gaussian_diag_variance(self, gaussian_diag):
        x = sample(gaussian_diag, 100_000, seed=2)
        var = x.var(axis=0)
        assert 3.8 < var[0] < 4.2
        assert 0.95 < var[1] < 1.05

    def test_zero_draws_rejected(self, gaussian_2d):
        with pytest.raises(DomainError):
            sample(gaussian_2d, 0, seed=0)

    def test_derived_seeds_are_stable_and_distinct(self):
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
        assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)
        assert derive_seed(5, 1) != derive_seed(6, 1)


class TestDirectionalLaw:
    def test_gaussian_unit_direction_is_standard_normal(self, gaussian_2d):
        law = directional_law(gaussian_2d, [0.6, 0.8])
        assert isinstance(law, NormalLaw)
        assert law.sigma == pytest.approx(1.0, rel=1e-12)

    def test_uniform_axis_direction(self, uniform_2d):
        law = directional_law(uniform_2d, [1.0, 0.0])
        for x in (-1.0, -0.5, 0.0, 0.3, 1.0):
            assert law.cdf(x) == pytest.approx((x + 1.0) / 2.0, abs=1e-12)

    def test_uniform_diagonal_is_triangular(self, uniform_2d):
        law = directional_law(uniform_2d, [1.0, 1.0])
        assert law.cdf(0.0) == pytest.approx(0.5, abs=1e-12)
        assert law.cdf(1.0) == pytest.approx(0.875, abs=1e-12)
        assert law.cdf(-2.0) == pytest.approx(0.0, abs=1e-15)
        assert law.cdf(2.0) == pytest.approx(1.0, abs=1e-15)

    def test_zero_direction_rejected(self, gaussian_2d):
        with pytest.raises(DomainError):
            directional_law(gaussian_2d, [0.0, 0.0])

    def test_wrong_shape_rejected(self, gaussian_2d):
        with pytest.raises(DomainError):
            directional_law(gaussian_2d, [1.0, 0.0, 0.0])

    @pytest.mark.parametrize("model", [
        GaussianModel(np.diag([4.0, 1.0])),
        UniformBoxModel([1.0, 0.5]),
    ], ids=["gaussian-diag", "uniform-box"])
    def test_matches_projected_samples(self, model):
        theta = np.array([0.8, -0.6])
        law = directional_law(model, theta)
        projected = sample(model, 100_000, seed=11) @ theta
        assert stats.kstest(projected, law.cdf).statistic < 0.01

    def test_laplace_calibrated_law_matches_samples(self):
        model = LaplaceProductModel([1.0, 2.0])
        theta = np.array([1.0, 1.0]) / math.sqrt(2.0)
        law = directional_law(model, theta)
        assert not law.is_analytic
        projected = sample(model, 100_000, seed=12) @ theta
        assert stats.kstest(projected, law.cdf).statistic < 0.012

    @pytest.mark.parametrize("model", [
        GaussianModel(np.diag([4.0, 1.0])),
        UniformBoxModel([1.0, 0.5]),
    ], ids=["gaussian-diag", "uniform-box"])
    def test_scaling_equivariance(self, model):
        theta = np.array([0.3, 0.9])
        base = directional_law(model, theta)
        doubled = directional_law(model, 2.0 * theta)
        for x in np.linspace(-1.5, 1.5, 13):
            assert doubled.cdf(2.0 * x) == pytest.approx(base.cdf(x), abs=1e-12)


class TestScalarLaws:
    @pytest.mark.parametrize("law", ANALYTIC_LAWS, ids=repr)
    def test_log_concave_cdf(self, law):
        lo = law.ppf(1e-6)
        hi = law.isf(1e-6)
        xs = np.linspace(lo, hi, 60)
        logs = np.array([law.logcdf(x) for x in xs])
        for i in range(1, len(xs) - 1):
            assert logs[i] >= 0.5 * (logs[i - 1] + logs[i + 1]) - 1e-12

    @pytest.mark.parametrize("law", ANALYTIC_LAWS, ids=repr)
    @pytest.mark.parametrize("t", [1e-6, 1e-3, 0.1, 0.5, 0.9, 0.999, 1 - 1e-6])
    def test_cdf_inverts_quantile(self, law, t):
        assert law.cdf(law.ppf(t)) == pytest.approx(t, rel=1e-8, abs=1e-12)

    def test_isf_resolves_tiny_tails(self):
        law = NormalLaw(1.0)
        x = law.isf(1e-20)
        assert law.sf(x) == pytest.approx(1e-20, rel=1e-8)

    def test_empirical_quantiles_hit_order_statistics(self):
        xs = np.array([3.0, -1.0, 0.5, 2.0, -0.25])
        law = EmpiricalLaw(xs)
        ordered = np.sort(xs)
        for i in range(1, xs.size + 1):
            assert law.ppf(i / xs.size) == ordered[i - 1]

    def test_empirical_expected_max_one_draw_is_the_mean_of_the_interpolant(self):
        law = EmpiricalLaw([0.0, 1.0])
        # J rises from 1/2 at 0 to 1 at 1; E = 1 - int_0^1 (1+x)/2 dx = 1/4
        assert law.expected_max_exact(1) == pytest.approx(0.25, abs=1e-15)

    @given(st.floats(min_value=0.05, max_value=20.0), st.floats(min_value=-3.0, max_value=3.0))
    @settings(max_examples=50, deadline=None)
    def test_normal_scale_property(self, sigma, x):
        assert NormalLaw(sigma).cdf(sigma * x) == pytest.approx(NormalLaw(1.0).cdf(x), abs=1e-12)

    @pytest.mark.parametrize("text, kind", [
        ("uniform", UniformSumLaw),
        ("normal:2", NormalLaw),
        ("exponential", ShiftedExponentialLaw),
        ("triangular", UniformSumLaw),
        ("laplace:0.5", LaplaceLaw),
    ])
    def test_law_specs(self, text, kind):
        law = parse_law_spec(text)
        assert isinstance(law, kind)
        assert law.name == text

    def test_shifted_exponential_is_centred(self):
        law = ShiftedExponentialLaw(2.0)
        assert law.cdf(0.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-12)

    def test_unknown_law(self):
        with pytest.raises(DomainError):
            parse_law_spec("cauchy")


class TestModels:
    def test_model_strings(self):
        assert parse_model_string("gaussian:3").dim == 3
        spec = parse_model_string("gaussian-diag:4,1")
        assert spec.covariance == [[4.0, 0.0], [0.0, 1.0]]
        assert parse_model_string("uniform-box:1,2").half_widths == [1.0, 2.0]
        assert parse_model_string("laplace:1").kind == "laplace_product"
        wrapped = parse_model_string("empirical:gaussian:2")
        assert wrapped.kind == "empirical" and spec_dim(wrapped) == 2

    def test_unknown_model(self):
        with pytest.raises(ModelError):
            parse_model_string("student-t:3")

    def test_degenerate_box_rejected(self):
        with pytest.raises(ModelError):
            build_model(ModelSpec(kind="uniform_box", half_widths=[1.0, 0.0]))

    def test_singular_covariance_rejected(self):
        with pytest.raises(ModelError):
            build_model(ModelSpec(kind="gaussian", covariance=[[1.0, 1.0], [1.0, 1.0]]))

    def test_declared_dimension_must_match(self):
        with pytest.raises(ModelError):
            build_model(ModelSpec(kind="uniform_box", dim=3, half_widths=[1.0, 1.0]))

    def test_spec_round_trip(self, gaussian_diag):
        rebuilt = build_model(gaussian_diag.spec())
        assert np.array_equal(rebuilt.covariance(), gaussian_diag.covariance())

    def test_empirical_wrapper_uses_calibrated_marginals(self):
        model = build_model(parse_model_string("empirical:uniform-box:1"))
        assert not model.analytic
        law = directional_law(model, [1.0])
        assert isinstance(law, EmpiricalLaw)
        assert law.cdf(0.0) == pytest.approx(0.5, abs=0.01)


class TestValidateModel:
    def test_gaussian_passes(self, gaussian_2d):
        diag = validate_model(gaussian_2d, 10_000, seed=3)
        assert diag.passed
        assert diag.mean_norm <= diag.mean_threshold

    def test_covariance_eigenvalues(self):
        diag = validate_model(GaussianModel(np.eye(3)), 10_000, seed=4)
        assert 0.9 < diag.min_eigenvalue < 1.1

    def test_needs_enough_draws(self, gaussian_2d):
        with pytest.raises(DomainError):
            validate_model(gaussian_2d, 999, seed=0)

    def test_off_centre_sampler_fails(self):
        from distributions import EmpiricalModel

        model = EmpiricalModel(lambda rng, n: rng.standard_normal((n, 1)) + 1.0, dim=1,
                               calibration_size=1000)
        assert not validate_model(model, 10_000, seed=5).passed
