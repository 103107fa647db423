"""
The auxiliary upper bound is loose until the encoder is the posterior
=====================================================================

For a linear Gaussian latent model the exact posterior is available, so we
can watch the bound close the gap.
"""

import math

import numpy as np

from auxfdiv.bounds import upper_bound_estimate
from auxfdiv.distributions import GaussianMixture
from auxfdiv.divergences import exact_fdiv_quadrature
from auxfdiv.models import LatentGaussianModel, exact_posterior_encoder, random_linear_encoder

rng = np.random.default_rng(0)
data = GaussianMixture([0.3, 0.7], [1.0, 2.0], [0.1, 0.5])
model = LatentGaussianModel(1, 1, W=[[0.5]], b=[1.6], log_s=math.log(0.4))

for name in ("forward_kl", "reverse_kl", "js"):
    exact = exact_fdiv_quadrature(name, "data_to_model", data, model.marginal())
    tight = upper_bound_estimate(name, "data_to_model", model, exact_posterior_encoder(model),
                                 data, 20000, rng)
    loose = upper_bound_estimate(name, "data_to_model", model, random_linear_encoder(rng),
                                 data, 20000, rng)
    print(f"{name:11s} exact {exact:.4f}  posterior encoder {tight.value:.4f} "
          f"+/- {tight.std_error:.4f}  random encoder {loose.value:.4f}")
