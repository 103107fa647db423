import numpy as np
import pytest
from scipy import integrate, stats

from auxfdiv.distributions import DiagonalGaussian, GaussianMixture
from auxfdiv.divergences import (
    NAMES,
    REGISTRY,
    Direction,
    adaptive_simpson,
    conjugate_eval,
    exact_fdiv_quadrature,
    f_eval,
    f_prime_eval,
    gaussian_kl_closed_form,
    mvn_kl,
    output_activation_eval,
)
from auxfdiv.errors import ContractViolation, DomainError, NumericFailure


def gauss(m, s):
    return DiagonalGaussian(np.array([m]), np.array([2 * np.log(s)]))


class TestRegistry:
    @pytest.mark.parametrize("name", NAMES)
    def test_f_vanishes_at_one(self, name):
        np.testing.assert_allclose(f_eval(name, 1.0), 0.0, atol=1e-15)

    @pytest.mark.parametrize("name", NAMES)
    def test_fenchel_young_equality(self, name):
        # f*(f'(u)) = u f'(u) - f(u)
        u = np.array([0.3, 1.0, 2.5])
        t = f_prime_eval(name, u)
        np.testing.assert_allclose(conjugate_eval(name, t), u * t - f_eval(name, u), atol=1e-12)

    @pytest.mark.parametrize("name", NAMES)
    def test_conjugate_is_supremum(self, name):
        u = np.linspace(1e-3, 50, 200001)
        for t in (-2.0, -0.5, 0.1):
            if not REGISTRY[name].in_domain(t):
                continue
            assert np.max(u * t - f_eval(name, u)) <= conjugate_eval(name, t) + 1e-9

    @pytest.mark.parametrize("name", NAMES)
    def test_activation_lands_in_domain(self, name):
        v = np.linspace(-20, 20, 41)
        spec = REGISTRY[name]
        np.testing.assert_allclose(spec.np_conjugate_of_activation(v),
                                   spec.conjugate(output_activation_eval(name, v)), atol=1e-9)

    def test_f_domain(self):
        with pytest.raises(DomainError):
            f_eval("forward_kl", 0.0)

    def test_conjugate_domain(self):
        with pytest.raises(DomainError):
            conjugate_eval("reverse_kl", 0.5)

    def test_unknown_name(self):
        with pytest.raises(ContractViolation):
            f_eval("hellinger", 1.0)

    def test_direction_parse(self):
        assert Direction.parse("model_to_data") is Direction.MODEL_TO_DATA
        with pytest.raises(ContractViolation):
            Direction.parse("sideways")


class TestClosedForms:
    def test_unit_shift(self):
        assert gaussian_kl_closed_form(gauss(0, 1), gauss(1, 1)) == pytest.approx(0.5)

    def test_mvn_matches_diagonal(self, rng):
        m1, m2 = rng.normal(size=3), rng.normal(size=3)
        v1, v2 = np.exp(rng.normal(size=3)), np.exp(rng.normal(size=3))
        a = DiagonalGaussian(m1, np.log(v1))
        b = DiagonalGaussian(m2, np.log(v2))
        np.testing.assert_allclose(mvn_kl(m1, np.diag(v1), m2, np.diag(v2)),
                                   gaussian_kl_closed_form(a, b), rtol=1e-12)


class TestQuadrature:
    def test_simpson_polynomial_and_gaussian(self):
        assert adaptive_simpson(lambda x: x**3, 0.0, 2.0) == pytest.approx(4.0, abs=1e-12)
        val = adaptive_simpson(stats.norm.pdf, -10, 10, tol=1e-12)
        assert val == pytest.approx(1.0, abs=1e-11)

    def test_simpson_gives_up_with_diagnostics(self):
        with pytest.raises(NumericFailure) as info:
            adaptive_simpson(lambda x: np.sign(np.sin(1e3 * x)), 0, 1, tol=1e-14, max_depth=4)
        assert "achieved_tolerance" in info.value.diagnostics

    @pytest.mark.parametrize("name", NAMES)
    def test_identical_densities_give_zero(self, name):
        g = gauss(0.3, 0.7)
        assert abs(exact_fdiv_quadrature(name, "data_to_model", g, g)) < 1e-10

    def test_kl_orientation(self):
        p, q = gauss(0.0, 1.0), gauss(1.0, 2.0)
        fwd = exact_fdiv_quadrature("forward_kl", "data_to_model", p, q)
        rev = exact_fdiv_quadrature("reverse_kl", "data_to_model", p, q)
        np.testing.assert_allclose(fwd, gaussian_kl_closed_form(p, q), atol=1e-8)
        np.testing.assert_allclose(rev, gaussian_kl_closed_form(q, p), atol=1e-8)
        # swapping the direction swaps the ratio
        np.testing.assert_allclose(
            exact_fdiv_quadrature("forward_kl", "model_to_data", p, q), rev, atol=1e-8)

    def test_against_scipy_quad(self, two_mode_target):
        q = gauss(1.7, 0.62)
        lp, lq = two_mode_target.logpdf, q.logpdf

        def js(x):
            p_, q_ = np.exp(lp(x)), np.exp(lq(x))
            m = 0.5 * (p_ + q_)
            return 0.5 * (p_ * np.log(p_ / m) + q_ * np.log(q_ / m))

        ref, _ = integrate.quad(js, -6, 9, limit=500, epsabs=1e-12)
        np.testing.assert_allclose(exact_fdiv_quadrature("js", "data_to_model",
                                                         two_mode_target, q), ref, atol=1e-8)

    def test_js_is_symmetric_and_bounded(self, two_mode_target):
        q = gauss(5.0, 0.1)
        a = exact_fdiv_quadrature("js", "data_to_model", two_mode_target, q)
        b = exact_fdiv_quadrature("js", "model_to_data", two_mode_target, q)
        np.testing.assert_allclose(a, b, atol=1e-8)
        assert a <= np.log(2) + 1e-9

    def test_gan_is_twice_js(self, two_mode_target):
        q = gauss(1.5, 0.8)
        np.testing.assert_allclose(
            exact_fdiv_quadrature("gan", "data_to_model", two_mode_target, q),
            2 * exact_fdiv_quadrature("js", "data_to_model", two_mode_target, q), atol=1e-8)

    def test_mixture_as_model(self):
        m = GaussianMixture([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
        v = exact_fdiv_quadrature("forward_kl", "data_to_model", m, m)
        assert abs(v) < 1e-10
