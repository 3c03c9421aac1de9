"""Latent representations of credit customers from a WoE-fed variational
autoencoder, with automatic cluster labelling and per-cluster risk reports."""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
