"""Gaussian densities, mixtures, empirical data and their Gaussian-spread forms.

Every density has two evaluation paths: ``log_prob`` records on the active
tape and accepts tensors, ``logpdf`` is plain numpy and serves as the
oracle / reporting path.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grad_engine as ge
from .grad_engine import ContractViolation, Tensor

LOG_2PI = math.log(2.0 * math.pi)


def _as_batch(x):
    """Return (batch tensor/array of shape (B, D), was_vector)."""
    shape = x.shape
    if len(shape) == 1:
        if isinstance(x, Tensor):
            return x.reshape(1, shape[0]), True
        return np.asarray(x, dtype=np.float64).reshape(1, -1), True
    if len(shape) != 2:
        raise ContractViolation(f"expected (D,) or (B, D), got {shape}")
    return x, False


def _unbatch(out, was_vector):
    return out.reshape(()) if was_vector else out


# ---------------------------------------------------------------------------
# diagonal Gaussian
# ---------------------------------------------------------------------------


@dataclass
class DiagonalGaussian:
    """N(mean, diag(exp(log_variance))). Fields are arrays or tape tensors
    of shape (D,) or (B, D)."""

    mean: object
    log_variance: object

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def log_prob(self, x):
        return gaussian_log_prob(self, x)

    def logpdf(self, x) -> np.ndarray:
        mean = np.asarray(getattr(self.mean, "value", self.mean))
        lv = np.asarray(getattr(self.log_variance, "value", self.log_variance))
        x = np.asarray(x, dtype=np.float64)
        if mean.shape[-1] == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return np.sum(-0.5 * LOG_2PI - 0.5 * lv - 0.5 * (x - mean) ** 2 * np.exp(-lv), axis=-1)

    def sample_reparam(self, rng, epsilon=None):
        return gaussian_sample_reparam(self, rng, epsilon)

    @property
    def std(self) -> np.ndarray:
        lv = np.asarray(getattr(self.log_variance, "value", self.log_variance))
        return np.exp(0.5 * lv)


def gaussian_log_prob(g: DiagonalGaussian, x):
    """Sum over dimensions of the diagonal-Gaussian log-density, on tape.

    Differentiable in the mean, the log-variance and ``x``. Batched inputs of
    shape (B, D) give a (B,) result; a single (D,) point gives a scalar.
    """
    if x.shape[-1] != g.mean.shape[-1] or x.shape[-1] != g.log_variance.shape[-1]:
        raise ContractViolation(
            f"dimension mismatch: x {x.shape}, mean {g.mean.shape}, "
            f"log_variance {g.log_variance.shape}"
        )
    tape = ge._tape_of(x, g.mean, g.log_variance)
    x = x if isinstance(x, Tensor) else tape.constant(x)
    mean = g.mean if isinstance(g.mean, Tensor) else tape.constant(g.mean)
    lv = g.log_variance if isinstance(g.log_variance, Tensor) else tape.constant(g.log_variance)
    shapes = {x.shape, mean.shape, lv.shape}
    if len(shapes) != 1:
        raise ContractViolation(f"shape mismatch {sorted(shapes)}")
    sq = ge.square(x - mean) * ge.exp(-lv)
    per_dim = (sq + lv) * -0.5
    return ge.tsum(per_dim, axis=-1) - 0.5 * LOG_2PI * x.shape[-1]


def gaussian_sample_reparam(g: DiagonalGaussian, rng, epsilon=None):
    """Reparameterized draw: mean + exp(log_variance / 2) * epsilon.

    Returns ``(sample, epsilon)``; pass ``epsilon`` to reuse noise.
    """
    shape = g.mean.shape
    if epsilon is None:
        epsilon = rng.standard_normal(shape)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if epsilon.shape != shape:
        raise ContractViolation(f"epsilon shape {epsilon.shape} != {shape}")
    if isinstance(g.mean, Tensor) or isinstance(g.log_variance, Tensor):
        tape = ge._tape_of(g.mean, g.log_variance)
        lv = g.log_variance if isinstance(g.log_variance, Tensor) else tape.constant(g.log_variance)
        mean = g.mean if isinstance(g.mean, Tensor) else tape.constant(g.mean)
        sample = mean + ge.exp(lv * 0.5) * epsilon
    else:
        sample = np.asarray(g.mean) + np.exp(0.5 * np.asarray(g.log_variance)) * epsilon
    return sample, epsilon


def isotropic_log_prob(y, mean, sigma: float):
    """log N(y; mean, sigma^2 I) summed over the last axis, on tape."""
    d = y.shape[-1]
    sq = ge.tsum(ge.square(y - mean), axis=-1)
    return sq * (-0.5 / sigma**2) - 0.5 * d * (LOG_2PI + 2.0 * math.log(sigma))


def standard_normal_log_prob(z):
    d = z.shape[-1]
    if not isinstance(z, Tensor):
        z = ge.current_tape().constant(z)
    return ge.tsum(ge.square(z), axis=-1) * -0.5 - 0.5 * d * LOG_2PI


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------


class GaussianMixture:
    """Finite mixture of diagonal Gaussians.

    ``weights`` (K,), ``means`` (K, D), ``stds`` (K, D). One-dimensional
    mixtures may pass flat (K,) means and stds.
    """

    def __init__(self, weights, means, stds):
        w = np.asarray(weights, dtype=np.float64).ravel()
        mu = np.asarray(means, dtype=np.float64)
        sd = np.asarray(stds, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        if sd.ndim == 1:
            sd = sd[:, None]
        if sd.shape != mu.shape:
            sd = np.broadcast_to(sd, mu.shape).copy()
        if w.size < 1 or w.size != mu.shape[0]:
            raise ContractViolation("need K >= 1 weights matching the component means")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"weights must lie on the simplex, got {w}")
        if np.any(sd <= 0):
            raise ContractViolation("component standard deviations must be positive")
        self.weights, self.means, self.stds = w, mu, sd

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def variance(self) -> np.ndarray:
        second = self.weights @ (self.stds**2 + self.means**2)
        return second - self.mean() ** 2

    def component_log_probs(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        z = (x[..., None, :] - self.means) / self.stds
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return (
            log_w
            - np.sum(0.5 * z**2 + np.log(self.stds), axis=-1)
            - 0.5 * self.dim * LOG_2PI
        )

    def logpdf(self, x) -> np.ndarray:
        """numpy log-density; 1-D mixtures accept raw arrays of points."""
        comp = self.component_log_probs(x)
        m = comp.max(axis=-1, keepdims=True)
        return (m + np.log(np.exp(comp - m).sum(axis=-1, keepdims=True)))[..., 0]

    def log_prob(self, x):
        return mixture_log_prob(self, x)

    def sample(self, n: int, rng) -> np.ndarray:
        return mixture_sample(self, rng, n)


def mixture_log_prob(m: GaussianMixture, x):
    """log sum_k w_k N(x; mu_k, diag sigma_k^2) on tape, stable log-sum-exp."""
    if x.shape[-1] != m.dim:
        raise ContractViolation(f"dimension mismatch: x {x.shape}, mixture D={m.dim}")
    xb, vec = _as_batch(x)
    if not isinstance(xb, Tensor):
        xb = ge.current_tape().constant(xb)
    b = xb.shape[0]
    cols = None
    for k in range(m.n_components):
        if m.weights[k] == 0.0:
            continue
        z = ge.matmul(ge.bias_add(xb, -m.means[k]), np.diag(1.0 / m.stds[k]))
        lp = ge.tsum(ge.square(z), axis=1) * -0.5 + float(
            math.log(m.weights[k]) - np.sum(np.log(m.stds[k])) - 0.5 * m.dim * LOG_2PI
        )
        onehot = np.zeros((1, m.n_components))
        onehot[0, k] = 1.0
        col = ge.matmul(lp.reshape(b, 1), onehot)
        cols = col if cols is None else cols + col
    return _unbatch(ge.logsumexp(cols, axis=1), vec)


def mixture_sample(m: GaussianMixture, rng, n: int | None = None) -> np.ndarray:
    """Draw component indices from the weights, then the component Gaussian.

    With ``n=None`` a single (D,) point is returned, otherwise (n, D).
    """
    count = 1 if n is None else n
    k = rng.choice(m.n_components, size=count, p=m.weights)
    eps = rng.standard_normal((count, m.dim))
    x = m.means[k] + m.stds[k] * eps
    return x[0] if n is None else x


# ---------------------------------------------------------------------------
# empirical data and spreading
# ---------------------------------------------------------------------------


class EmpiricalDataset:
    """N points in D dimensions, shape (N, D)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ContractViolation("dataset needs at least one point, shape (N, D)")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("dataset points must be finite")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    # I/O ------------------------------------------------------------------
    def to_csv(self, path) -> None:
        np.savetxt(path, self.points, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "EmpiricalDataset":
        return cls(np.loadtxt(path, delimiter=",", ndmin=2))

    def to_binary(self, path) -> None:
        n, d = self.points.shape
        with open(path, "wb") as fh:
            fh.write(struct.pack("<II", n, d))
            fh.write(self.points.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "EmpiricalDataset":
        raw = Path(path).read_bytes()
        if len(raw) < 8:
            raise ContractViolation("binary dataset shorter than its header")
        n, d = struct.unpack("<II", raw[:8])
        body = raw[8:]
        if len(body) != 8 * n * d:
            raise ContractViolation(f"binary body holds {len(body)} bytes, expected {8 * n * d}")
        return cls(np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64))


@dataclass(frozen=True)
class SpreadNoise:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractViolation(f"spread sigma must be positive, got {self.sigma}")


class SpreadedEmpirical:
    """p(y) = (1/N) sum_n N(y; x_n, sigma^2 I)."""

    def __init__(self, dataset: EmpiricalDataset, noise: SpreadNoise):
        self.dataset = dataset
        self.noise = noise

    @property
    def dim(self) -> int:
        return self.dataset.dim

    @property
    def sigma(self) -> float:
        return self.noise.sigma

    def with_sigma(self, sigma: float) -> "SpreadedEmpirical":
        return SpreadedEmpirical(self.dataset, SpreadNoise(sigma))

    def log_prob(self, y):
        return spread_log_prob(self, y)

    def logpdf(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        x = self.dataset.points
        if self.dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        s2 = self.sigma**2
        sq = np.sum((y[..., None, :] - x) ** 2, axis=-1)
        a = -sq / (2 * s2)
        m = a.max(axis=-1, keepdims=True)
        lse = (m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True)))[..., 0]
        return lse - math.log(self.dataset.n) - 0.5 * self.dim * (LOG_2PI + math.log(s2))

    def sample(self, n: int, rng, return_index: bool = False):
        idx = rng.integers(0, self.dataset.n, size=n)
        y = self.dataset.points[idx] + self.sigma * rng.standard_normal((n, self.dim))
        return (y, idx) if return_index else y


def spread_log_prob(s: SpreadedEmpirical, y):
    """Exact log of the spread empirical density over all N points, on tape."""
    if y.shape[-1] != s.dim:
        raise ContractViolation(f"dimension mismatch: y {y.shape}, data D={s.dim}")
    yb, vec = _as_batch(y)
    if not isinstance(yb, Tensor):
        yb = ge.current_tape().constant(yb)
    s2 = s.sigma**2
    a = ge.sqdist(yb, s.dataset.points) * (-0.5 / s2)
    out = ge.logsumexp(a, axis=1) - (
        math.log(s.dataset.n) + 0.5 * s.dim * (LOG_2PI + math.log(s2))
    )
    return _unbatch(out, vec)


def spread_model_conditional(generator_mean, noise: SpreadNoise) -> DiagonalGaussian:
    """N(y; mu(z), sigma^2 I): the spread form of a delta-output generator."""
    if not noise.sigma > 0:
        raise ContractViolation("spread sigma must be positive")
    lv = np.full(generator_mean.shape, 2.0 * math.log(noise.sigma))
    return DiagonalGaussian(generator_mean, lv)


# ---------------------------------------------------------------------------
# annealing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    sigma_start: float = 1.0
    sigma_end: float = 0.1
    total_steps: int = 1

    def __post_init__(self):
        if not (self.sigma_start >= self.sigma_end > 0):
            raise ContractViolation("need sigma_start >= sigma_end > 0")
        if self.total_steps < 1:
            raise ContractViolation("total_steps must be positive")

    def __call__(self, step: int) -> float:
        return anneal_sigma(self, step)


def anneal_sigma(schedule: AnnealSchedule, step: int) -> float:
    """Geometric interpolation sigma_start * (sigma_end/sigma_start)^(step/total)."""
    if not 0 <= step <= schedule.total_steps:
        raise ContractViolation(f"step {step} outside [0, {schedule.total_steps}]")
    ratio = schedule.sigma_end / schedule.sigma_start
    return schedule.sigma_start * ratio ** (step / schedule.total_steps)
