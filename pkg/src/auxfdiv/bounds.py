"""Monte Carlo estimates of the auxiliary joint f-divergence upper bound.

The data side is ``p(y) q(z|y)`` and the model side ``p(z) p(y|z)``. Any
object with ``log_prob`` (tape) and ``sample(n, rng)`` can act as the data
density; in practice a :class:`GaussianMixture` for the one-dimensional fits
and a :class:`SpreadedEmpirical` for sample datasets.

Sampling side. The orientation of the ratio is fixed by the direction; the
bound can be estimated from samples of either joint. Sampling the ratio's
numerator averages ``f(r)/r`` and sampling the denominator averages ``f(r)``.
The ``"mixture"`` side draws half of the samples from each joint, i.e. from
their equal mixture, and averages ``2 f(r) / (1 + r)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grad_engine as ge
from .distributions import DiagonalGaussian, gaussian_log_prob, standard_normal_log_prob
from .divergences import Direction, gaussian_kl_closed_form, get_spec, mvn_kl
from .errors import ContractViolation, NumericFailure
from .grad_engine import Tensor

LOG_RATIO_LIMIT = 500.0
SIDES = ("model", "data", "mixture")


@dataclass
class JointLogRatioTerms:
    log_conditional: Tensor  # log p(y|z)
    log_prior: Tensor  # log p(z)
    log_data: Tensor  # log p(y)
    log_encoder: Tensor  # log q(z|y)

    @property
    def model_over_data(self) -> Tensor:
        return (self.log_conditional + self.log_prior) - (self.log_data + self.log_encoder)

    @property
    def data_over_model(self) -> Tensor:
        return (self.log_data + self.log_encoder) - (self.log_conditional + self.log_prior)

    def oriented(self, direction) -> Tensor:
        if Direction.parse(direction) is Direction.DATA_TO_MODEL:
            return self.data_over_model
        return self.model_over_data


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    std_error: float
    n_samples: int
    direction: str
    divergence: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericFailure("bound estimate is not finite", value=self.value)
        if self.std_error < 0:
            raise ContractViolation("std_error must be non-negative")


def numerator_side(direction) -> str:
    return "data" if Direction.parse(direction) is Direction.DATA_TO_MODEL else "model"


def default_side(spec, direction) -> str:
    """Sampling side used when none is given.

    KL-type integrands are sampled where they reduce to a plain log-ratio:
    the numerator side for forward KL and the integrating side for reverse
    KL. Sampling reverse KL from the numerator instead weights every sample
    by a density ratio that is heavy-tailed whenever the integrating density
    has the heavier tails.

    JS and GAN integrands grow linearly in the ratio of the other joint to
    the sampled one, so on either side the variance is finite only when the
    sampled joint has the heavier tails. Under the equal mixture of the two
    joints their integrand is bounded, so they default to ``"mixture"``.
    """
    num = numerator_side(direction)
    name = get_spec(spec).name
    if name == "reverse_kl":
        return "model" if num == "data" else "data"
    if name == "forward_kl":
        return num
    return "mixture"


def joint_log_ratio(gen, enc, data, y, z, gen_mean=None, q: DiagonalGaussian | None = None
                    ) -> JointLogRatioTerms:
    """All four log-densities at (y, z), each of shape (B,)."""
    if y.shape[-1] != gen.dim or z.shape[-1] != gen.latent_dim:
        raise ContractViolation(
            f"y {y.shape} / z {z.shape} do not match D={gen.dim}, L={gen.latent_dim}"
        )
    log_cond = gen.log_conditional(y, z, gen_mean)
    log_prior = standard_normal_log_prob(z)
    log_data = data.log_prob(y)
    log_enc = gaussian_log_prob(q, z) if q is not None else enc.log_prob(y, z)
    return JointLogRatioTerms(log_cond, log_prior, log_data, log_enc)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def draw_bound_noise(gen, enc, data, n: int, rng, sample_from: str, y_per_z: int = 1) -> dict:
    """Every random number one bound evaluation needs, drawn up front so
    that several evaluations can share them (common random numbers)."""
    if sample_from not in SIDES:
        raise ContractViolation(f"sample_from must be one of {SIDES}")
    if sample_from == "mixture":
        if n % 2:
            raise ContractViolation("mixture sampling needs an even n")
        return {"side": "mixture",
                "data": draw_bound_noise(gen, enc, data, n // 2, rng, "data"),
                "model": draw_bound_noise(gen, enc, data, n // 2, rng, "model", y_per_z)}
    if sample_from == "model":
        if n % y_per_z:
            raise ContractViolation("n must be a multiple of y_per_z")
        out = gen.draw_noise(rng, n // y_per_z, y_per_z)
    else:
        out = {"y": np.asarray(data.sample(n, rng), dtype=np.float64).reshape(n, gen.dim),
               "eps_z": rng.standard_normal((n, gen.latent_dim))}
    out["side"] = sample_from
    return out


def sample_side(gen, enc, data, noise: dict):
    """Reparameterized (y, z) from the side recorded in ``noise`` plus
    whatever intermediate quantities the log-ratio can reuse."""
    tape = ge.current_tape()
    if noise["side"] == "model":
        y, z, mu = gen.sample_joint(noise)
        return y, z, {"gen_mean": mu}
    y = tape.constant(noise["y"])
    z, q = enc.sample(y, noise["eps_z"])
    return y, z, {"q": q}


def _guarded_log_ratio(spec, direction, gen, enc, data, noise: dict):
    y, z, extra = sample_side(gen, enc, data, noise)
    terms = joint_log_ratio(gen, enc, data, y, z, **extra)
    L = terms.oriented(direction)
    worst = float(np.max(np.abs(L.value)))
    if not worst <= LOG_RATIO_LIMIT:
        raise NumericFailure(
            "joint log-ratio overflow",
            max_abs_log_ratio=worst,
            n_over=int(np.sum(~(np.abs(L.value) <= LOG_RATIO_LIMIT))),
            divergence=spec.name,
            direction=Direction.parse(direction).value,
        )
    return L, terms


def bound_integrand(spec, direction, gen, enc, data, noise: dict):
    """Per-sample integrand (B,) on tape, and the log-ratio terms.

    Takes single-side noise; mixture noise goes through :func:`bound_strata`.
    """
    spec = get_spec(spec)
    if noise["side"] == "mixture":
        raise ContractViolation("mixture noise has two strata; use bound_strata")
    L, terms = _guarded_log_ratio(spec, direction, gen, enc, data, noise)
    if noise["side"] == numerator_side(direction):
        return spec.tape_f_of_exp_over(L), terms
    return spec.tape_f_of_exp(L), terms


def bound_strata(spec, direction, gen, enc, data, noise: dict) -> list[Tensor]:
    """Per-sample integrands, one tensor per stratum of equal weight.

    Single-side noise is one stratum. Mixture noise gives a model half and a
    data half, each averaging ``2 f(r) / (1 + r)``: the ratio of either
    joint to their equal mixture is ``2 r / (1 + r)`` or ``2 / (1 + r)``.
    """
    spec = get_spec(spec)
    if noise["side"] != "mixture":
        return [bound_integrand(spec, direction, gen, enc, data, noise)[0]]
    out = []
    for side in SIDES[:2]:
        L, _ = _guarded_log_ratio(spec, direction, gen, enc, data, noise[side])
        weight = ge.scale(ge.exp(ge.scale(ge.softplus(L), -1.0)), 2.0)  # 2 / (1 + r)
        out.append(spec.tape_f_of_exp(L) * weight)
    return out


def upper_bound_loss(spec, direction, gen, enc, data, noise: dict):
    """Differentiable scalar: the sample mean of the integrand (stratified
    for mixture noise)."""
    strata = bound_strata(spec, direction, gen, enc, data, noise)
    total = ge.tmean(strata[0])
    for part in strata[1:]:
        total = total + ge.tmean(part)
    return ge.scale(total, 1.0 / len(strata))


def summarize(samples, spec, direction) -> BoundEstimate:
    """Mean and standard error of per-sample values. A list of arrays is
    read as equally weighted strata."""
    strata = samples if isinstance(samples, list) else [samples]
    strata = [np.asarray(x, dtype=np.float64).ravel() for x in strata]
    k = len(strata)
    variance = sum(x.var(ddof=1) / x.size for x in strata) / k**2
    return BoundEstimate(
        value=float(np.mean([x.mean() for x in strata])),
        std_error=float(math.sqrt(variance)),
        n_samples=sum(x.size for x in strata),
        direction=Direction.parse(direction).value,
        divergence=get_spec(spec).name,
    )


def upper_bound_estimate(spec, direction, gen, enc, data, n_samples: int, rng,
                         sample_from: str | None = None, noise: dict | None = None
                         ) -> BoundEstimate:
    """Mean and standard error of the joint-divergence integrand.

    ``sample_from`` defaults to :func:`default_side`. Pass ``noise`` to reuse
    draws across calls.
    """
    side = sample_from or default_side(spec, direction)
    if n_samples < (4 if side == "mixture" else 2):
        raise ContractViolation("need at least 2 samples per stratum")
    if noise is None:
        noise = draw_bound_noise(gen, enc, data, n_samples, rng, side)
    with ge.Tape():
        strata = bound_strata(spec, direction, gen, enc, data, noise)
        return summarize([x.value for x in strata], spec, direction)


# ---------------------------------------------------------------------------
# KL surrogates and the ELBO
# ---------------------------------------------------------------------------


def reverse_kl_surrogate_loss(gen, enc, data, logmix, noise: dict, rng):
    """Mean of log p(y|z) + log p(z) - log q(z|y) - logmix(y) over model samples.

    ``logmix`` stands in for log p(y) in gradients only: its value is off by
    a constant, so report bound values with :func:`upper_bound_estimate`.
    """
    y, z, mu = gen.sample_joint(noise)
    per = (gen.log_conditional(y, z, mu) + standard_normal_log_prob(z)) - enc.log_prob(y, z) \
        - logmix(y, data.sigma, rng, mean=mu)
    return ge.tmean(per)


def forward_kl_surrogate_loss(gen, enc, data, noise: dict, rng=None):
    """Negative ELBO averaged over data samples y and z ~ q(z|y).

    Adding E[log p(y)] turns this into the forward-KL joint bound.
    """
    y = ge.current_tape().constant(noise["y"])
    z, q = enc.sample(y, noise["eps_z"])
    per = gaussian_log_prob(q, z) - (gen.log_conditional(y, z) + standard_normal_log_prob(z))
    return ge.tmean(per)


def elbo(gen, enc, y, n_z_samples: int, rng, epsilon=None):
    """Monte Carlo ELBO at each row of y, shape (B,)."""
    if n_z_samples < 1:
        raise ContractViolation("n_z_samples must be >= 1")
    yv = np.atleast_2d(np.asarray(getattr(y, "value", y), dtype=np.float64))
    b = yv.shape[0]
    if epsilon is None:
        epsilon = rng.standard_normal((b * n_z_samples, gen.latent_dim))
    epsilon = np.asarray(epsilon, dtype=np.float64).reshape(b * n_z_samples, gen.latent_dim)
    yy = ge.current_tape().constant(np.repeat(yv, n_z_samples, axis=0))
    z, q = enc.sample(yy, epsilon)
    per = gen.log_conditional(yy, z) + standard_normal_log_prob(z) - gaussian_log_prob(q, z)
    return ge.tmean(per.reshape(b, n_z_samples), axis=1)


# ---------------------------------------------------------------------------
# closed-form identities on Gaussian joints
# ---------------------------------------------------------------------------


def _kl1(a, b) -> float:
    """KL between univariate Gaussians given as (mean, std) pairs."""
    g = [DiagonalGaussian(np.array([m]), np.array([2.0 * math.log(sd)])) for m, sd in (a, b)]
    return gaussian_kl_closed_form(*g)


def _linear_gaussian_joint(a, b, s):
    """(mean, cov) of (x, z) for z ~ N(0,1), x | z ~ N(a z + b, s^2)."""
    return np.array([b, 0.0]), np.array([[a * a + s * s, a], [a, 1.0]])


def appendix_a_oracles(case: str, rng=None) -> dict:
    """Both sides of a joint-vs-marginal KL identity on Gaussian joints.

    Cases: ``tightness`` (auxiliary conditional = exact posterior),
    ``independence_decomposition`` (joint against an independent pair) and
    ``factorized`` (shared independent latent). Returns lhs, rhs and the
    absolute discrepancy.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if case == "tightness":
        a, b, s = rng.normal(), rng.normal(), math.exp(rng.normal(scale=0.3))
        m, v = rng.normal(), math.exp(rng.normal(scale=0.3))
        p_mean, p_cov = _linear_gaussian_joint(a, b, s)
        c, tau2 = a / (a * a + s * s), s * s / (a * a + s * s)
        q_mean = np.array([m, c * (m - b)])
        q_cov = np.array([[v, c * v], [c * v, c * c * v + tau2]])
        marg_p = (b, math.sqrt(a * a + s * s))
        marg_q = (m, math.sqrt(v))
        lhs = [mvn_kl(q_mean, q_cov, p_mean, p_cov), mvn_kl(p_mean, p_cov, q_mean, q_cov)]
        rhs = [_kl1(marg_q, marg_p), _kl1(marg_p, marg_q)]
    elif case == "independence_decomposition":
        alpha, beta, gamma = rng.normal(), rng.normal(), math.exp(rng.normal(scale=0.3))
        mz, sz = rng.normal(), math.exp(rng.normal(scale=0.3))
        mx, sx = rng.normal(), math.exp(rng.normal(scale=0.3))
        q_mean = np.array([beta, 0.0])
        q_cov = np.array([[alpha**2 + gamma**2, alpha], [alpha, 1.0]])
        p_mean = np.array([mx, mz])
        p_cov = np.diag([sx * sx, sz * sz])
        prior_term = _kl1((0.0, 1.0), (mz, sz))
        cond_term = math.log(sx / gamma) + (gamma**2 + alpha**2 + (beta - mx) ** 2) / (
            2 * sx * sx) - 0.5
        lhs = [mvn_kl(q_mean, q_cov, p_mean, p_cov)]
        rhs = [prior_term + cond_term]
    elif case == "factorized":
        m, v = rng.normal(), math.exp(rng.normal(scale=0.3))
        mp, vp = rng.normal(), math.exp(rng.normal(scale=0.3))
        q_mean, q_cov = np.array([m, 0.0]), np.diag([v, 1.0])
        p_mean, p_cov = np.array([mp, 0.0]), np.diag([vp, 1.0])
        lhs = [mvn_kl(q_mean, q_cov, p_mean, p_cov)]
        rhs = [_kl1((m, math.sqrt(v)), (mp, math.sqrt(vp)))]
    else:
        raise ContractViolation(f"unknown case {case!r}")
    disc = max(abs(x - y) for x, y in zip(lhs, rhs))
    return {"case": case, "lhs": lhs, "rhs": rhs, "discrepancy": disc}
