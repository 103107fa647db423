import math

import numpy as np
import pytest

from auxfdiv import grad_engine as ge
from auxfdiv.bounds import (
    BoundEstimate,
    appendix_a_oracles,
    bound_integrand,
    bound_strata,
    default_side,
    draw_bound_noise,
    elbo,
    forward_kl_surrogate_loss,
    joint_log_ratio,
    numerator_side,
    summarize,
    upper_bound_estimate,
    upper_bound_loss,
)
from auxfdiv.distributions import DiagonalGaussian, GaussianMixture
from auxfdiv.divergences import NAMES, exact_fdiv_quadrature, gaussian_kl_closed_form
from auxfdiv.errors import ContractViolation
from auxfdiv.models import (
    Encoder,
    LatentGaussianModel,
    exact_posterior_encoder,
    random_latent_model,
    random_linear_encoder,
)


@pytest.fixture
def lgm():
    return LatentGaussianModel(1, 1, W=[[0.6]], b=[0.3], log_s=math.log(0.5))


@pytest.fixture
def data_g():
    return GaussianMixture([1.0], [1.0], [0.8])


class TestSides:
    def test_numerator_side(self):
        assert numerator_side("data_to_model") == "data"
        assert numerator_side("model_to_data") == "model"

    def test_default_side(self):
        assert default_side("forward_kl", "data_to_model") == "data"
        assert default_side("reverse_kl", "data_to_model") == "model"
        assert default_side("reverse_kl", "model_to_data") == "data"
        for name in ("js", "gan"):
            for direction in ("data_to_model", "model_to_data"):
                assert default_side(name, direction) == "mixture"


class TestJointLogRatio:
    def test_orientation_flips_sign(self, lgm, data_g, rng):
        enc = exact_posterior_encoder(lgm)
        y, z = rng.normal(size=(4, 1)), rng.normal(size=(4, 1))
        with ge.Tape():
            t = joint_log_ratio(lgm, enc, data_g, y, z)
            a = t.oriented("data_to_model").value
            b = t.oriented("model_to_data").value
        np.testing.assert_allclose(a, -b)

    def test_exact_posterior_gives_marginal_ratio(self, lgm, data_g, rng):
        # with q = p(z|y) the joint ratio collapses to the marginal ratio
        enc = exact_posterior_encoder(lgm)
        y, z = rng.normal(size=(6, 1)), rng.normal(size=(6, 1))
        with ge.Tape():
            lr = joint_log_ratio(lgm, enc, data_g, y, z).data_over_model.value
        np.testing.assert_allclose(lr, data_g.logpdf(y) - lgm.marginal_logpdf(y), atol=1e-12)


class TestUpperBound:
    def test_reverse_kl_integrand_is_log_ratio(self, lgm, data_g, rng):
        enc = exact_posterior_encoder(lgm)
        side = default_side("reverse_kl", "model_to_data")
        noise = draw_bound_noise(lgm, enc, data_g, 500, rng, side)
        with ge.Tape():
            integrand, terms = bound_integrand("reverse_kl", "model_to_data", lgm, enc, data_g,
                                               noise)
            # samples come from the data side, whose log-ratio is log(data / model)
            np.testing.assert_allclose(integrand.value, terms.data_over_model.value, atol=1e-12)

    @pytest.mark.parametrize("side", ["data", "model"])
    def test_tightness_on_both_sides(self, lgm, data_g, rng, side):
        enc = exact_posterior_encoder(lgm)
        est = upper_bound_estimate("forward_kl", "data_to_model", lgm, enc, data_g, 40_000, rng,
                                   sample_from=side)
        kl = gaussian_kl_closed_form(DiagonalGaussian(np.array([1.0]), np.array([math.log(0.64)])),
                                     lgm.marginal())
        assert abs(est.value - kl) <= 3 * est.std_error

    @pytest.mark.parametrize("name", NAMES)
    @pytest.mark.parametrize("direction", ["data_to_model", "model_to_data"])
    def test_mixture_side_is_tight(self, lgm, data_g, rng, name, direction):
        enc = exact_posterior_encoder(lgm)
        est = upper_bound_estimate(name, direction, lgm, enc, data_g, 40_000, rng,
                                   sample_from="mixture")
        exact = exact_fdiv_quadrature(name, direction, data_g, lgm.marginal())
        assert abs(est.value - exact) <= 4 * est.std_error

    def test_mixture_weight_identity(self, lgm, data_g, rng):
        # per sample, 2 f(r) / (1 + r) = f(r) * 2 / (1 + r) computed directly
        enc = random_linear_encoder(rng)
        noise = draw_bound_noise(lgm, enc, data_g, 40, rng, "mixture")
        spec_f = lambda u: 0.5 * (u * np.log(u) - (u + 1) * np.log((1 + u) / 2))
        with ge.Tape():
            strata = bound_strata("js", "data_to_model", lgm, enc, data_g, noise)
            for side, part in zip(("model", "data"), strata):
                r = np.exp(bound_integrand("forward_kl", "data_to_model", lgm, enc, data_g,
                                           noise[side])[1].data_over_model.value)
                np.testing.assert_allclose(part.value, 2 * spec_f(r) / (1 + r), rtol=1e-10)

    def test_mixture_loss_gradient(self, data_g, rng):
        m = random_latent_model(rng)
        enc = Encoder(1, 1, (4,), rng)
        noise = draw_bound_noise(m, enc, data_g, 20, rng, "mixture")
        err = ge.gradient_check(lambda ps: upper_bound_loss("gan", "data_to_model", m, enc,
                                                            data_g, noise),
                                [m.params, enc.params])
        assert err <= 1e-5

    def test_mixture_noise_needs_even_n(self, lgm, data_g, rng):
        with pytest.raises(ContractViolation):
            draw_bound_noise(lgm, exact_posterior_encoder(lgm), data_g, 11, rng, "mixture")

    def test_single_side_integrand_rejects_mixture(self, lgm, data_g, rng):
        enc = exact_posterior_encoder(lgm)
        noise = draw_bound_noise(lgm, enc, data_g, 10, rng, "mixture")
        with ge.Tape(), pytest.raises(ContractViolation):
            bound_integrand("js", "data_to_model", lgm, enc, data_g, noise)

    def test_stratified_summary(self):
        a, b = np.array([1.0, 2.0, 3.0]), np.array([10.0, 14.0])
        est = summarize([a, b], "js", "data_to_model")
        assert est.value == pytest.approx((2.0 + 12.0) / 2)
        assert est.std_error == pytest.approx(math.sqrt(1.0 / 3 + 8.0 / 2) / 2)
        assert est.n_samples == 5

    @pytest.mark.parametrize("name", NAMES)
    def test_jensen_with_poor_encoder(self, data_g, rng, name):
        m = random_latent_model(rng)
        enc = random_linear_encoder(rng)
        for direction in ("data_to_model", "model_to_data"):
            est = upper_bound_estimate(name, direction, m, enc, data_g, 4000, rng)
            assert est.value + 3 * est.std_error >= exact_fdiv_quadrature(
                name, direction, data_g, m.marginal())

    def test_estimate_fields(self, lgm, data_g, rng):
        est = upper_bound_estimate("js", "data_to_model", lgm, Encoder(1, 1, (4,), rng), data_g,
                                   100, rng)
        assert isinstance(est, BoundEstimate)
        assert est.n_samples == 100 and est.std_error > 0

    def test_unknown_side(self, lgm, data_g, rng):
        with pytest.raises(ContractViolation):
            draw_bound_noise(lgm, exact_posterior_encoder(lgm), data_g, 10, rng, "prior")


class TestElbo:
    def test_identity_with_surrogate(self, lgm, data_g, rng):
        enc = Encoder(1, 1, (8,), rng)
        noise = draw_bound_noise(lgm, enc, data_g, 300, rng, "data")
        with ge.Tape():
            a = forward_kl_surrogate_loss(lgm, enc, data_g, noise).value
            b = elbo(lgm, enc, noise["y"], 1, rng, epsilon=noise["eps_z"]).value.mean()
        assert abs(a + b) <= 1e-12

    def test_exact_posterior_elbo_is_log_marginal(self, lgm, rng):
        enc = exact_posterior_encoder(lgm)
        y = rng.normal(size=(5, 1))
        with ge.Tape():
            e = elbo(lgm, enc, y, 3, rng).value
        np.testing.assert_allclose(e, lgm.marginal_logpdf(y), atol=1e-12)


class TestOracles:
    @pytest.mark.parametrize("case", ["tightness", "independence_decomposition", "factorized"])
    def test_identities(self, case, rng):
        assert appendix_a_oracles(case, rng)["discrepancy"] <= 1e-10

    def test_unknown_case(self):
        with pytest.raises(ContractViolation):
            appendix_a_oracles("nope")
