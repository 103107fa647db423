"""
Sampling the gradient of a log-mixture
======================================

The gradient of log p(y) for a spread empirical density is an expectation
over which data point generated y. Drawing indices gives an unbiased
estimate; evaluating the density on a minibatch does not.
"""

import numpy as np

from auxfdiv.distributions import EmpiricalDataset, SpreadedEmpirical, SpreadNoise
from auxfdiv.logmix_grad import (
    IndexSamplerConfig,
    draw_minibatch,
    full_sum_gradient,
    logmix_gradient,
    naive_minibatch_log_prob,
)
from auxfdiv.models import ImplicitGenerator

rng = np.random.default_rng(0)
x = rng.normal(size=(64, 2))
gen = ImplicitGenerator(2, 2, hidden=(), rng=rng, spread=SpreadNoise(0.5))
z, eps = rng.normal(size=(1, 2)), rng.normal(size=(1, 2))

exact = full_sum_gradient(x, 0.5, gen, z, eps)
R = 20000
est = logmix_gradient(x, 0.5, gen, np.repeat(z, R, 0), np.repeat(eps, R, 0),
                      IndexSamplerConfig(use_unbiased=True), rng)
for k in exact:
    print(k, "exact", exact[k].ravel().round(4), "sampled", (est[k] / R).ravel().round(4))

# log of a minibatch average underestimates the log of the full average
y = rng.normal(size=2)
full = SpreadedEmpirical(EmpiricalDataset(x), SpreadNoise(0.5)).logpdf(y)
mb = np.mean([naive_minibatch_log_prob(x, 0.5, y, draw_minibatch(64, 8, rng))
              for _ in range(5000)])
print("log p(y) %.4f, minibatch average %.4f" % (full, mb))
