"""Robustness laboratory for stationary-point classification losses.

Core pieces: a deterministic dense-network engine (:mod:`spnet.nn`), the
loss family with exact logit gradients and stationary-point location
(:mod:`spnet.losses`), toy/image dataset generation (:mod:`spnet.datasets`),
white-box L-inf attacks (:mod:`spnet.attacks`), boundary and landscape
diagnostics (:mod:`spnet.analysis`), and a CLI (``spnet``) that wires them
into reproducible experiment runs.

The fused loss kernel has a compiled backend with a pure-numpy fallback;
see :mod:`spnet.backend`.
"""

from . import analysis, attacks, backend, datasets, losses, nn, training
from .losses import LossSpec, find_stationary_point, softmax
from .nn import Network, dense_network, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "attacks",
    "backend",
    "datasets",
    "losses",
    "nn",
    "training",
    "LossSpec",
    "Network",
    "dense_network",
    "find_stationary_point",
    "load_checkpoint",
    "save_checkpoint",
    "softmax",
    "__version__",
]
