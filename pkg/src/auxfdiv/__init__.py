"""Auxiliary upper bounds on f-divergences for training latent generative models.

Modules, bottom-up: ``grad_engine`` (reverse-mode tape), ``distributions``,
``divergences`` (f registry and the quadrature oracle), ``models``,
``logmix_grad``, ``bounds``, ``fgan_baseline``, ``training`` and
``experiments`` / ``cli``.
"""
from .errors import ContractViolation, DomainError, NumericFailure

__version__ = "0.1.0"

__all__ = ["ContractViolation", "DomainError", "NumericFailure", "__version__"]
