"""Generative models (theta side) and the recognition network (phi side).

All forward passes record on the active tape. Parameters live in
:class:`~auxfdiv.grad_engine.ParameterSet` objects whose names carry a model
prefix, so several models can share one tape.
"""
from __future__ import annotations

import json
import logging
import math

import numpy as np

from . import grad_engine as ge
from .distributions import (
    LOG_2PI,
    DiagonalGaussian,
    SpreadNoise,
    gaussian_log_prob,
    isotropic_log_prob,
    spread_model_conditional,
    standard_normal_log_prob,
)
from .errors import ContractViolation
from .grad_engine import ParameterSet, Tensor

log = logging.getLogger(__name__)

LOGVAR_CLAMP = (-10.0, 10.0)


def _const(x):
    return x if isinstance(x, Tensor) else ge.current_tape().constant(x)


class Mlp:
    """Fully connected net: leaky-relu (or relu) hidden layers, linear output.

    Weights are drawn from N(0, 2 / (fan_in + fan_out)); biases start at 0.
    """

    def __init__(self, widths, prefix: str, role: str = "theta", rng=None,
                 activation: str = "leaky_relu", params: ParameterSet | None = None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ContractViolation(f"bad layer widths {widths}")
        if activation not in ("leaky_relu", "relu"):
            raise ContractViolation(f"unknown activation {activation!r}")
        self.widths = widths
        self.prefix = prefix
        self.activation = activation
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = ParameterSet(role=role)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
                params[f"{prefix}.W{i}"] = rng.normal(0.0, math.sqrt(2.0 / (a + b)), (a, b))
                params[f"{prefix}.b{i}"] = np.zeros(b)
        self.params = params

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def preactivation_margin(self, x) -> float:
        """Smallest |pre-activation| over hidden units; finite differences
        are only meaningful when this exceeds the perturbation size."""
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        margin = np.inf
        for i in range(self.n_layers - 1):
            h = h @ self.params[f"{self.prefix}.W{i}"] + self.params[f"{self.prefix}.b{i}"]
            margin = min(margin, float(np.abs(h).min()))
            h = np.where(h > 0, h, (ge.LEAKY_SLOPE if self.activation == "leaky_relu" else 0.0) * h)
        return margin

    def __call__(self, x):
        vec = len(x.shape) == 1
        h = _const(x)
        if vec:
            h = h.reshape(1, x.shape[0])
        if h.shape[1] != self.widths[0]:
            raise ContractViolation(f"input width {h.shape[1]} != {self.widths[0]}")
        act = ge.leaky_relu if self.activation == "leaky_relu" else ge.relu
        for i in range(self.n_layers):
            h = ge.bias_add(ge.matmul(h, self.params.leaf(f"{self.prefix}.W{i}")),
                            self.params.leaf(f"{self.prefix}.b{i}"))
            if i < self.n_layers - 1:
                h = act(h)
        return h.reshape(h.shape[1]) if vec else h


# ---------------------------------------------------------------------------
# theta-side models
# ---------------------------------------------------------------------------


class ImplicitGenerator:
    """delta(x - mu(z)) p(z), only ever evaluated in its spread form.

    ``spread`` is the fixed (non-trainable) observation noise; annealing
    replaces it between steps.
    """

    def __init__(self, latent_dim: int, data_dim: int, hidden=(400,) * 5, rng=None,
                 spread: SpreadNoise = SpreadNoise(1.0), activation="leaky_relu",
                 mean_net: Mlp | None = None):
        self.latent_dim = int(latent_dim)
        self.dim = int(data_dim)
        self.mean_net = mean_net or Mlp([latent_dim, *hidden, data_dim], "gen", "theta",
                                        rng, activation)
        self.spread = spread

    @property
    def params(self) -> ParameterSet:
        return self.mean_net.params

    @property
    def sigma(self) -> float:
        return self.spread.sigma

    def set_sigma(self, sigma: float) -> None:
        self.spread = SpreadNoise(sigma)

    def mean(self, z):
        return generator_mean(self, z)

    def draw_noise(self, rng, n_z: int, y_per_z: int = 1) -> dict:
        return {
            "z": rng.standard_normal((n_z, self.latent_dim)),
            "eps": rng.standard_normal((n_z * y_per_z, self.dim)),
            "y_per_z": y_per_z,
        }

    def sample_joint(self, noise: dict):
        """y = mu(z) + sigma * eps with every z repeated ``y_per_z`` times.

        Returns ``(y, z)`` tensors with matching rows.
        """
        z = _const(noise["z"])
        k = noise.get("y_per_z", 1)
        mu = generator_mean(self, z)
        if k > 1:
            rows = np.repeat(np.arange(z.shape[0]), k)
            mu, z = ge.take(mu, rows), ge.take(z, rows)
        return mu + noise["eps"] * self.sigma, z, mu

    def log_conditional(self, y, z, mean=None):
        mean = generator_mean(self, z) if mean is None else mean
        return isotropic_log_prob(y, mean, self.sigma)

    def log_joint(self, y, z, mean=None):
        return self.log_conditional(y, z, mean) + standard_normal_log_prob(z)

    def conditional(self, z) -> DiagonalGaussian:
        return spread_model_conditional(generator_mean(self, z), self.spread)


def generator_mean(g: ImplicitGenerator, z):
    if z.shape[-1] != g.latent_dim:
        raise ContractViolation(f"z has {z.shape[-1]} entries, latent_dim is {g.latent_dim}")
    return g.mean_net(z)


def generator_sample_y(g: ImplicitGenerator, rng, n: int | None = None, epsilon=None):
    """Draw z ~ N(0, I) and y = mu(z) + sigma * epsilon; returns (y, z, epsilon)."""
    count = 1 if n is None else n
    z = rng.standard_normal((count, g.latent_dim))
    if epsilon is None:
        epsilon = rng.standard_normal((count, g.dim))
    epsilon = np.asarray(epsilon, dtype=np.float64).reshape(count, g.dim)
    cond = g.conditional(z)
    y, _ = cond.sample_reparam(rng, epsilon)
    if n is None:
        return y.reshape(g.dim), z[0], epsilon[0]
    return y, z, epsilon


class LatentGaussianModel:
    """z ~ N(0, I_L), y | z ~ N(z W + b, s^2 I_D) with W, b, log s trainable.

    The marginal is N(b, W^T W + s^2 I). With L = D = 1 this is the bivariate
    Gaussian joint used for the one-dimensional comparison fits.
    """

    def __init__(self, latent_dim: int = 1, data_dim: int = 1, W=None, b=None,
                 log_s=0.0, prefix: str = "lgm", rng=None):
        self.latent_dim, self.dim, self.prefix = int(latent_dim), int(data_dim), prefix
        rng = rng if rng is not None else np.random.default_rng(0)
        if W is None:
            W = rng.normal(0.0, 0.5, (latent_dim, data_dim))
        self.params = ParameterSet(role="theta")
        self.params[f"{prefix}.W"] = np.asarray(W, dtype=np.float64).reshape(latent_dim, data_dim)
        self.params[f"{prefix}.b"] = np.zeros(data_dim) if b is None else np.ravel(b)
        self.params[f"{prefix}.log_s"] = np.array([float(log_s)])

    # numpy views --------------------------------------------------------------
    @property
    def W(self) -> np.ndarray:
        return self.params[f"{self.prefix}.W"]

    @property
    def b(self) -> np.ndarray:
        return self.params[f"{self.prefix}.b"]

    @property
    def s(self) -> float:
        return float(np.exp(self.params[f"{self.prefix}.log_s"][0]))

    def marginal_cov(self) -> np.ndarray:
        return self.W.T @ self.W + self.s**2 * np.eye(self.dim)

    def marginal(self) -> DiagonalGaussian:
        if self.dim != 1:
            raise ContractViolation("diagonal marginal only defined for D = 1")
        return DiagonalGaussian(self.b.copy(), np.log(np.diag(self.marginal_cov())))

    def marginal_logpdf(self, y) -> np.ndarray:
        return self.marginal().logpdf(y)

    def posterior(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Exact p(z | y): returns (mean rows (B, L), covariance (L, L))."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        prec = np.eye(self.latent_dim) + self.W @ self.W.T / self.s**2
        cov = np.linalg.inv(prec)
        mean = (y - self.b) @ self.W.T @ cov / self.s**2
        return mean, cov

    # tape forms ---------------------------------------------------------------
    def _leaves(self):
        p = self.params
        return (p.leaf(f"{self.prefix}.W"), p.leaf(f"{self.prefix}.b"),
                p.leaf(f"{self.prefix}.log_s"))

    def mean(self, z):
        W, b, _ = self._leaves()
        return ge.bias_add(ge.matmul(_const(z), W), b)

    def draw_noise(self, rng, n_z: int, y_per_z: int = 1) -> dict:
        return {
            "z": rng.standard_normal((n_z, self.latent_dim)),
            "eps": rng.standard_normal((n_z * y_per_z, self.dim)),
            "y_per_z": y_per_z,
        }

    def _log_s_rows(self, rows: int):
        """(rows, D) tensor filled with log s."""
        _, _, log_s = self._leaves()
        return ge.matmul(np.ones((rows, 1)), ge.matmul(ge.reshape(log_s, (1, 1)),
                                                       np.ones((1, self.dim))))

    def sample_joint(self, noise: dict):
        z = _const(noise["z"])
        k = noise.get("y_per_z", 1)
        mu = self.mean(z)
        if k > 1:
            rows = np.repeat(np.arange(z.shape[0]), k)
            mu, z = ge.take(mu, rows), ge.take(z, rows)
        y = mu + ge.exp(self._log_s_rows(mu.shape[0])) * noise["eps"]
        return y, z, mu

    def log_conditional(self, y, z, mean=None):
        mean = self.mean(z) if mean is None else mean
        lv = self._log_s_rows(y.shape[0]) * 2.0
        return gaussian_log_prob(DiagonalGaussian(mean, lv), _const(y))

    def log_joint(self, y, z, mean=None):
        return self.log_conditional(y, z, mean) + standard_normal_log_prob(z)


class GaussianModel1D:
    """Univariate N(mu, exp(log_sigma)^2) with reparameterized sampling."""

    def __init__(self, mu: float = 0.0, log_sigma: float = 0.0, prefix: str = "gauss"):
        self.prefix = prefix
        self.params = ParameterSet({f"{prefix}.mu": [mu], f"{prefix}.log_sigma": [log_sigma]},
                                   role="theta")

    @property
    def mu(self) -> float:
        return float(self.params[f"{self.prefix}.mu"][0])

    @property
    def sigma(self) -> float:
        return float(np.exp(self.params[f"{self.prefix}.log_sigma"][0]))

    def as_gaussian(self) -> DiagonalGaussian:
        return DiagonalGaussian(np.array([self.mu]), np.array([2.0 * math.log(self.sigma)]))

    def logpdf(self, x) -> np.ndarray:
        return self.as_gaussian().logpdf(x)

    def mean(self):
        return np.array([self.mu])

    def variance(self):
        return np.array([self.sigma**2])

    def log_prob(self, x):
        return gaussian_model_log_prob(self, x)

    def sample(self, rng, n: int, epsilon=None):
        return gaussian_model_sample(self, rng, n, epsilon)


def _gm_rows(m: GaussianModel1D, rows: int):
    mu = m.params.leaf(f"{m.prefix}.mu")
    ls = m.params.leaf(f"{m.prefix}.log_sigma")
    ones = np.ones((rows, 1))
    return ge.matmul(ones, ge.reshape(mu, (1, 1))), ge.matmul(ones, ge.reshape(ls, (1, 1)))


def gaussian_model_log_prob(m: GaussianModel1D, x):
    """log N(x; mu, sigma^2) for x of shape (B, 1) or a scalar; on tape."""
    scalar = np.ndim(getattr(x, "value", x)) == 0
    x = _const(np.reshape(x, (1, 1)) if scalar else x)
    if len(x.shape) == 1:
        x = x.reshape(x.shape[0], 1)
    mu, ls = _gm_rows(m, x.shape[0])
    out = gaussian_log_prob(DiagonalGaussian(mu, ls * 2.0), x)
    return out.reshape(()) if scalar else out


def gaussian_model_sample(m: GaussianModel1D, rng, n: int, epsilon=None):
    """Reparameterized (n, 1) sample mu + sigma * eps, on tape."""
    if epsilon is None:
        epsilon = rng.standard_normal((n, 1))
    epsilon = np.asarray(epsilon, dtype=np.float64).reshape(n, 1)
    mu, ls = _gm_rows(m, n)
    return mu + ge.exp(ls) * epsilon


# ---------------------------------------------------------------------------
# phi side
# ---------------------------------------------------------------------------


class Encoder:
    """q(z | y) = N(mean(y), diag exp(logvar(y))) from a shared trunk.

    ``hidden=()`` gives linear heads. The log-variance is clamped to
    [-10, 10]; clamp activations are counted in ``clamp_events``.
    """

    def __init__(self, data_dim: int, latent_dim: int, hidden=(50, 50), rng=None,
                 activation="leaky_relu", prefix: str = "enc"):
        rng = rng if rng is not None else np.random.default_rng(1)
        self.dim, self.latent_dim, self.prefix = int(data_dim), int(latent_dim), prefix
        self.hidden = tuple(int(h) for h in hidden)
        self.activation = activation
        self.params = ParameterSet(role="phi")
        feat = data_dim
        if self.hidden:
            self.trunk = Mlp([data_dim, *self.hidden], f"{prefix}.trunk", "phi", rng, activation)
            for k, v in self.trunk.params.items():
                self.params[k] = v
            self.trunk.params = self.params
            feat = self.hidden[-1]
        else:
            self.trunk = None
        self.mean_head = Mlp([feat, latent_dim], f"{prefix}.mean", "phi", rng)
        self.logvar_head = Mlp([feat, latent_dim], f"{prefix}.logvar", "phi", rng)
        for head in (self.mean_head, self.logvar_head):
            for k, v in head.params.items():
                self.params[k] = v
            head.params = self.params
        self.clamp_events = 0

    def features(self, y):
        y = _const(y)
        if self.trunk is None:
            return y
        h = self.trunk(y)
        act = ge.leaky_relu if self.activation == "leaky_relu" else ge.relu
        return act(h)

    def params_at(self, y) -> DiagonalGaussian:
        return encoder_params(self, y)

    def log_prob(self, y, z):
        return encoder_log_prob(self, y, z)

    def sample(self, y, eps):
        q = encoder_params(self, y)
        z, _ = q.sample_reparam(None, eps)
        return z, q


def encoder_params(e: Encoder, y) -> DiagonalGaussian:
    if y.shape[-1] != e.dim:
        raise ContractViolation(f"encoder expects D={e.dim}, got {y.shape}")
    h = e.features(y)
    mean = e.mean_head(h)
    raw = e.logvar_head(h)
    lo, hi = LOGVAR_CLAMP
    hits = int(np.sum((raw.value < lo) | (raw.value > hi)))
    if hits:
        if not e.clamp_events:
            log.warning("encoder log-variance clamp activated on %d entries "
                        "(further activations are counted in clamp_events)", hits)
        e.clamp_events += hits
    return DiagonalGaussian(mean, ge.clip(raw, lo, hi))


def encoder_log_prob(e: Encoder, y, z):
    q = encoder_params(e, y)
    z = _const(z)
    if z.shape != q.mean.shape:
        raise ContractViolation(f"z shape {z.shape} != {q.mean.shape}")
    return gaussian_log_prob(q, z)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def params_to_json(*sets: ParameterSet, **meta) -> str:
    """Value-exact JSON: Python float repr round-trips every float64."""
    doc = dict(meta)
    doc["parameter_sets"] = [
        {
            "role": ps.role,
            "params": {
                name: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
                for name, v in ps.items()
            },
        }
        for ps in sets
    ]
    return json.dumps(doc, indent=1)


def params_from_json(text: str) -> tuple[list[ParameterSet], dict]:
    doc = json.loads(text)
    sets = []
    for entry in doc.pop("parameter_sets"):
        ps = ParameterSet(role=entry["role"])
        for name, rec in entry["params"].items():
            ps[name] = np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        sets.append(ps)
    return sets, doc


def mlp_to_json(net: Mlp) -> str:
    return params_to_json(net.params, kind="mlp", widths=net.widths, prefix=net.prefix,
                          activation=net.activation)


def mlp_from_json(text: str) -> Mlp:
    sets, meta = params_from_json(text)
    return Mlp(meta["widths"], meta["prefix"], sets[0].role, activation=meta["activation"],
               params=sets[0])


def exact_posterior_encoder(model: LatentGaussianModel, prefix: str = "enc") -> Encoder:
    """Linear-head encoder equal to p(z | y) of a latent Gaussian model.

    Exact when the posterior covariance is diagonal (always so for L = 1).
    """
    enc = Encoder(model.dim, model.latent_dim, hidden=(), prefix=prefix)
    _, cov = model.posterior(np.zeros((1, model.dim)))
    A = model.W.T @ cov / model.s**2
    enc.params[f"{prefix}.mean.W0"] = A
    enc.params[f"{prefix}.mean.b0"] = -model.b @ A
    enc.params[f"{prefix}.logvar.W0"] = np.zeros((model.dim, model.latent_dim))
    enc.params[f"{prefix}.logvar.b0"] = np.log(np.diag(cov))
    return enc


def random_linear_encoder(rng, data_dim: int = 1, latent_dim: int = 1, scale: float = 0.5,
                          logvar_slope: float = 0.2, prefix: str = "enc") -> Encoder:
    """Linear-head encoder with random moderate parameters.

    The log-variance slope stays small so that the encoder variance does not
    collapse for outlying y, which keeps joint log-ratios in a finite range.
    """
    enc = Encoder(data_dim, latent_dim, hidden=(), prefix=prefix)
    enc.params[f"{prefix}.mean.W0"] = rng.normal(0.0, scale, (data_dim, latent_dim))
    enc.params[f"{prefix}.mean.b0"] = rng.normal(0.0, scale, latent_dim)
    enc.params[f"{prefix}.logvar.W0"] = rng.normal(0.0, logvar_slope, (data_dim, latent_dim))
    enc.params[f"{prefix}.logvar.b0"] = rng.normal(-0.5, scale, latent_dim)
    return enc


def random_latent_model(rng, prefix: str = "lgm") -> LatentGaussianModel:
    """One-dimensional latent Gaussian model with random moderate parameters."""
    return LatentGaussianModel(1, 1, W=rng.normal(0.0, 0.7, (1, 1)), b=rng.normal(1.5, 0.5, 1),
                               log_s=rng.normal(-0.5, 0.3), prefix=prefix, rng=rng)
