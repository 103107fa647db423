import math

import numpy as np
import pytest

from auxfdiv import grad_engine as ge
from auxfdiv.distributions import GaussianMixture
from auxfdiv.divergences import NAMES, exact_fdiv_quadrature
from auxfdiv.errors import ContractViolation
from auxfdiv.fgan_baseline import (
    Discriminator,
    FganSchedule,
    fgan_train,
    lower_bound_estimate,
    lower_bound_loss,
)
from auxfdiv.models import GaussianModel1D
from auxfdiv.training import Optimizer


def train_critic(name, data, model, hidden, steps, seed=0):
    rng = np.random.default_rng(seed)
    disc = Discriminator(name, hidden=hidden, rng=rng)
    opt = Optimizer(disc.params, "adam", 3e-3)
    for _ in range(steps):
        with ge.Tape() as tape:
            loss = lower_bound_loss(name, data.sample(256, rng), model, disc,
                                    rng.standard_normal((256, 1)))
            opt.step(tape.backward(loss * -1.0))
    return disc


@pytest.fixture
def pair():
    return GaussianMixture([1.0], [0.0], [1.0]), GaussianModel1D(1.0, math.log(0.8))


class TestLowerBound:
    @pytest.mark.parametrize("name", NAMES)
    def test_valid_after_critic_training(self, pair, name):
        data, model = pair
        disc = train_critic(name, data, model, (16,), 300)
        est = lower_bound_estimate(name, data, model, disc, 20_000, np.random.default_rng(9))
        exact = exact_fdiv_quadrature(name, "data_to_model", data, model.as_gaussian())
        assert est.value <= exact + 3 * est.std_error
        assert est.value > 0.3 * exact

    def test_gap_shrinks_with_capacity(self, pair):
        data, model = pair
        exact = exact_fdiv_quadrature("forward_kl", "data_to_model", data, model.as_gaussian())
        gaps = []
        for hidden in [(1,), (8,), (64,)]:
            disc = train_critic("forward_kl", data, model, hidden, 600)
            est = lower_bound_estimate("forward_kl", data, model, disc, 50_000,
                                       np.random.default_rng(4))
            gaps.append(exact - est.value)
        assert gaps[0] > gaps[1] > gaps[2] - 5e-3

    def test_needs_two_samples(self, pair, rng):
        data, model = pair
        with pytest.raises(ContractViolation):
            lower_bound_estimate("js", data, model, Discriminator("js", rng=rng), 1, rng)


class TestFganTrain:
    def test_trace_and_progress(self, two_mode_target):
        rng = np.random.default_rng(0)
        model = GaussianModel1D(1.5, 0.0)
        disc = Discriminator("forward_kl", rng=rng)
        trace = fgan_train("forward_kl", two_mode_target, model, disc,
                           FganSchedule(steps=1500, exact_every=500), rng)
        assert len(trace) == 1500
        assert abs(trace[-1]["exact_divergence"] - 0.2098) < 0.02
        assert set(trace[0]) == {"step", "bound_value", "mu", "sigma", "exact_divergence"}
        assert math.isnan(trace[0]["exact_divergence"])
        assert trace[-1]["exact_divergence"] < exact_fdiv_quadrature(
            "forward_kl", "data_to_model", two_mode_target, GaussianModel1D(1.5, 0.0).as_gaussian())

    def test_bad_schedule(self):
        with pytest.raises(ContractViolation):
            FganSchedule(disc_steps=0)
