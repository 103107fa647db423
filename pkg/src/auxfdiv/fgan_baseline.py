"""Fenchel-conjugate lower bound on an f-divergence and its min/max training.

The bound ``E_data[g(V(x))] - E_model[f*(g(V(x)))]`` holds for any critic V;
``g`` is the divergence's output activation, which keeps ``g(V)`` inside
the conjugate's domain. Everything here works on raw one-dimensional
densities without spread noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grad_engine as ge
from .bounds import BoundEstimate
from .divergences import exact_fdiv_quadrature, get_spec
from .errors import ContractViolation
from .models import GaussianModel1D, Mlp
from .training import Optimizer, TrainingAborted

ABORT_LIMIT = 1e3


class Discriminator:
    """Critic V: R^D -> R; the divergence fixes the output activation."""

    def __init__(self, divergence, dim: int = 1, hidden=(64, 64), rng=None,
                 activation: str = "leaky_relu", prefix: str = "disc"):
        self.spec = get_spec(divergence)
        self.net = Mlp([dim, *hidden, 1], prefix, "phi", rng, activation)

    @property
    def params(self):
        return self.net.params

    def __call__(self, x):
        return ge.reshape(self.net(x), (x.shape[0],))


def lower_bound_terms(spec, x_data, model: GaussianModel1D, disc: Discriminator, epsilon):
    """(data term (B,), model term (B,)) on tape; the bound is the difference
    of their means. The model side is reparameterized through ``epsilon``."""
    spec = get_spec(spec)
    tape = ge.current_tape()
    v_data = disc(tape.constant(np.asarray(x_data, dtype=np.float64).reshape(-1, 1)))
    x_model = model.sample(None, len(epsilon), epsilon)
    v_model = disc(x_model)
    t_data = spec.tape_output_activation(v_data)
    hi = spec.conjugate_domain[1]
    if not np.all(t_data.value <= hi):
        raise ContractViolation(f"critic output left the {spec.name} conjugate domain")
    return t_data, spec.tape_conjugate_of_activation(v_model)


def lower_bound_loss(spec, x_data, model, disc, epsilon):
    t_data, conj = lower_bound_terms(spec, x_data, model, disc, epsilon)
    return ge.tmean(t_data) - ge.tmean(conj)


def lower_bound_estimate(spec, data_sampler, model: GaussianModel1D, disc: Discriminator,
                         n_samples: int, rng) -> BoundEstimate:
    """MC estimate with a two-sample standard error."""
    if n_samples < 2:
        raise ContractViolation("n_samples must be >= 2 per side")
    sample = data_sampler.sample if hasattr(data_sampler, "sample") else data_sampler
    x = sample(n_samples, rng)
    eps = rng.standard_normal((n_samples, 1))
    with ge.Tape():
        a, b = lower_bound_terms(spec, x, model, disc, eps)
        a, b = a.value, b.value
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    return BoundEstimate(float(a.mean() - b.mean()), se, n_samples, "data_to_model",
                         get_spec(spec).name)


@dataclass(frozen=True)
class FganSchedule:
    steps: int = 20000
    disc_steps: int = 1
    batch_size: int = 100
    lr_model: float = 1e-3
    lr_disc: float = 1e-3
    optimizer: str = "adam"
    exact_every: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.disc_steps < 1 or self.batch_size < 2:
            raise ContractViolation("need steps >= 0, disc_steps >= 1, batch_size >= 2")


def _grads(spec, x, model, disc, eps, sign):
    with ge.Tape() as tape:
        loss = lower_bound_loss(spec, x, model, disc, eps)
        value = float(loss.value)
        grads = tape.backward(loss * sign)
    return value, grads


def fgan_train(spec, data, model: GaussianModel1D, disc: Discriminator,
               schedule: FganSchedule, rng) -> list[dict]:
    """Alternate critic ascent and model descent on the lower bound.

    Trace rows: step, bound_value, mu, sigma, exact_divergence (NaN except
    every ``exact_every`` steps).
    """
    spec = get_spec(spec)
    d_opt = Optimizer(disc.params, schedule.optimizer, schedule.lr_disc)
    m_opt = Optimizer(model.params, schedule.optimizer, schedule.lr_model)
    n = schedule.batch_size
    trace: list[dict] = []
    for step in range(schedule.steps):
        for _ in range(schedule.disc_steps):
            _, g = _grads(spec, data.sample(n, rng), model, disc,
                          rng.standard_normal((n, 1)), -1.0)
            d_opt.step(g)
        value, g = _grads(spec, data.sample(n, rng), model, disc,
                          rng.standard_normal((n, 1)), 1.0)
        if not abs(value) <= ABORT_LIMIT:
            raise TrainingAborted(f"lower bound diverged at step {step}", trace,
                                  [model.params.snapshot(), disc.params.snapshot()],
                                  step=step, bound=value)
        m_opt.step(g)
        row = {"step": step, "bound_value": value, "mu": model.mu, "sigma": model.sigma,
               "exact_divergence": math.nan}
        if schedule.exact_every and (step + 1) % schedule.exact_every == 0:
            row["exact_divergence"] = exact_fdiv_quadrature(
                spec, "data_to_model", data, model.as_gaussian())
        trace.append(row)
    return trace
