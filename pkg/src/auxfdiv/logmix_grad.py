"""Gradient estimators for the log of a spread empirical density.

``log p(y) = log (1/N) sum_n N(y; x_n, sigma^2 I)`` needs all N points. Its
gradient in y equals an expectation over the index posterior
``p(n | y) ∝ N(y; x_n, sigma^2 I)``, so sampling indices gives an unbiased
estimator. Two optional tricks cut variance and cost at the price of bias:
distances measured in a PCA subspace, and a fixed temperature replacing
``2 sigma^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grad_engine as ge
from .distributions import LOG_2PI, EmpiricalDataset, SpreadedEmpirical, SpreadNoise, spread_log_prob
from .errors import ContractViolation
from .grad_engine import Tensor

QUERIES = ("mean", "y")


def _points(data) -> np.ndarray:
    if isinstance(data, SpreadedEmpirical):
        data = data.dataset
    if isinstance(data, EmpiricalDataset):
        return data.points
    return np.atleast_2d(np.asarray(data, dtype=np.float64))


def _sigma(noise) -> float:
    return noise.sigma if isinstance(noise, SpreadNoise) else float(noise)


def _values(y) -> np.ndarray:
    return np.asarray(y.value if isinstance(y, Tensor) else y, dtype=np.float64)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaProjection:
    U: np.ndarray  # (D, d), orthonormal columns
    mean: np.ndarray  # (D,)

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.U

    def reconstruct(self, x) -> np.ndarray:
        return self.project(x) @ self.U.T + self.mean

    def to_dict(self) -> dict:
        return {"U": self.U.tolist(), "mean": self.mean.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "PcaProjection":
        return cls(np.array(doc["U"], dtype=np.float64), np.array(doc["mean"], dtype=np.float64))


def fit_pca(data, d: int) -> PcaProjection:
    """Top-d eigenvectors of the centered sample covariance.

    Signs are fixed so the largest-magnitude entry of each column is positive.
    """
    x = _points(data)
    n, dim = x.shape
    if not 1 <= d <= min(n, dim):
        raise ContractViolation(f"need 1 <= d <= min(N, D) = {min(n, dim)}, got d={d}")
    mean = x.mean(axis=0)
    xc = x - mean
    evals, evecs = np.linalg.eigh(xc.T @ xc / n)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    rank = int(np.sum(evals > max(evals[0], 0.0) * 1e-12)) if evals[0] > 0 else 0
    if rank < d:
        raise ContractViolation(f"covariance has rank {rank}, cannot keep d={d} components")
    U = evecs[:, :d].copy()
    pivot = np.argmax(np.abs(U), axis=0)
    U *= np.sign(U[pivot, np.arange(d)])
    return PcaProjection(U, mean)


# ---------------------------------------------------------------------------
# index posterior and sampler
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexSamplerConfig:
    """``use_unbiased`` switches both tricks off. ``query`` picks whether the
    trick-mode softmax is centred on the noiseless generator mean or on y."""

    temperature: float = 10.0
    samples_per_y: int = 30
    pca: PcaProjection | None = None
    use_unbiased: bool = False
    query: str = "mean"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ContractViolation("temperature must be positive")
        if self.samples_per_y < 1:
            raise ContractViolation("samples_per_y must be >= 1")
        if self.query not in QUERIES:
            raise ContractViolation(f"query must be one of {QUERIES}")


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    logits = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=-1, keepdims=True)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.maximum(
        np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T, 0.0
    )


def index_posterior(data, noise, y, config: IndexSamplerConfig = IndexSamplerConfig(),
                    mean=None) -> np.ndarray:
    """p(n | y) as an (N,) vector for one query or (B, N) for a batch.

    Unbiased mode uses ``-|y - x_n|^2 / (2 sigma^2)``. Trick mode uses
    ``-|U^T q - U^T x_n|^2 / T`` where q is the generator mean (``mean``)
    or y depending on ``config.query``.
    """
    x = _points(data)
    yv = _values(y)
    single = yv.ndim == 1
    yv = np.atleast_2d(yv)
    if yv.shape[1] != x.shape[1]:
        raise ContractViolation(f"y has D={yv.shape[1]}, data has D={x.shape[1]}")
    if config.use_unbiased:
        logits = -_sq_dists(yv, x) / (2.0 * _sigma(noise) ** 2)
    else:
        if config.query == "mean":
            if mean is None:
                raise ContractViolation("trick mode with query='mean' needs the generator mean")
            q = np.atleast_2d(_values(mean))
        else:
            q = yv
        if config.pca is not None:
            q, xs = config.pca.project(q), config.pca.project(x)
        else:
            xs = x
        logits = -_sq_dists(q, xs) / config.temperature
    p = _softmax_rows(logits)
    return p[0] if single else p


def sample_indices(probs: np.ndarray, count: int, rng) -> np.ndarray:
    """Inverse-CDF draws with replacement: (B, count) indices from (B, N) rows."""
    probs = np.atleast_2d(probs)
    b, n = probs.shape
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    offsets = np.arange(b)[:, None]
    u = rng.random((b, count)) + offsets
    flat = np.searchsorted((cdf + offsets).ravel(), u.ravel(), side="right")
    return np.minimum(flat.reshape(b, count) - offsets * n, n - 1)


def logmix_surrogate(data, noise, y, config: IndexSamplerConfig, rng, mean=None,
                     indices=None):
    """Mean over T sampled indices of log N(y; x_n, sigma^2 I), on tape.

    Indices are constants, so the y-gradient is ``(S/T - y) / sigma^2`` with
    S the sum of selected points. The squared-norm expansion keeps the cost
    at O(B D) once the indices are drawn. Returns (B,) for batched y.
    """
    x = _points(data)
    sigma = _sigma(noise)
    single = len(y.shape) == 1
    if not isinstance(y, Tensor):
        y = ge.current_tape().constant(y)
    yb = y.reshape(1, y.shape[0]) if single else y
    T = config.samples_per_y
    if indices is None:
        probs = index_posterior(x, sigma, yb.value, config,
                                None if mean is None else np.atleast_2d(_values(mean)))
        indices = sample_indices(probs, T, rng)
    indices = np.atleast_2d(indices)
    T = indices.shape[1]
    sel = x[indices]  # (B, T, D)
    S = sel.sum(axis=1)
    sq_sel = np.sum(sel * sel, axis=(1, 2))
    yy = ge.tsum(ge.square(yb), axis=1)
    ys = ge.tsum(yb * S, axis=1)
    quad = (yy * float(T) - ys * 2.0) + sq_sel
    d = x.shape[1]
    out = quad * (-0.5 / (sigma**2 * T)) - 0.5 * d * (LOG_2PI + 2.0 * math.log(sigma))
    return out.reshape(()) if single else out


class LogMixGradientEstimator:
    """Binds a dataset and sampler config; sigma is passed per call so the
    estimator follows annealing."""

    def __init__(self, data, config: IndexSamplerConfig = IndexSamplerConfig()):
        self.points = _points(data)
        self.config = config

    def __call__(self, y, sigma: float, rng, mean=None):
        return logmix_surrogate(self.points, sigma, y, self.config, rng, mean)


def full_sum_gradient(data, noise, gen, z, epsilon) -> dict[str, np.ndarray]:
    """Exact d/dtheta of sum_b log p(mu_theta(z_b) + sigma eps_b) via the full N-sum."""
    spread = SpreadedEmpirical(EmpiricalDataset(_points(data)), SpreadNoise(_sigma(noise)))
    with ge.Tape() as tape:
        y = gen.mean(tape.constant(np.atleast_2d(z))) + np.atleast_2d(epsilon) * spread.sigma
        out = ge.tsum(spread_log_prob(spread, y))
    grads = tape.backward(out)
    return {k: grads[k] for k in gen.params}


def logmix_gradient(data, noise, gen, z, epsilon, config: IndexSamplerConfig, rng
                    ) -> dict[str, np.ndarray]:
    """Sampled counterpart of :func:`full_sum_gradient` (summed over rows)."""
    sigma = _sigma(noise)
    with ge.Tape() as tape:
        mu = gen.mean(tape.constant(np.atleast_2d(z)))
        y = mu + np.atleast_2d(epsilon) * sigma
        out = ge.tsum(logmix_surrogate(data, sigma, y, config, rng, mean=mu))
    grads = tape.backward(out)
    return {k: grads[k] for k in gen.params}


def draw_minibatch(n: int, m: int, rng) -> np.ndarray:
    if not 1 <= m <= n:
        raise ContractViolation(f"minibatch size {m} outside [1, {n}]")
    return rng.choice(n, size=m, replace=False)


def naive_minibatch_log_prob(data, noise, y, minibatch) -> np.ndarray:
    """log of the spread density restricted to a minibatch. Biased low."""
    x = _points(data)[np.asarray(minibatch)]
    return SpreadedEmpirical(EmpiricalDataset(x), SpreadNoise(_sigma(noise))).logpdf(_values(y))
