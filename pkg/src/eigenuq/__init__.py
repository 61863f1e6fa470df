"""Eigenspace perturbation UQ for RANS turbulence models."""

__version__ = "0.1.0"

from . import channel, dns, features, forest, perturb, pipeline, rotation, tensors

__all__ = [
    "channel",
    "dns",
    "features",
    "forest",
    "perturb",
    "pipeline",
    "rotation",
    "tensors",
    "__version__",
]
