"""fastdiff-lab: numerical laboratory for fast-diffusion asymptotics.

Closed-form Barenblatt/spectral objects on the cigar manifold,
cross-verified against discretized linear and nonlinear evolutions.
"""

from . import affine, asymptotics, closedform, evolve, geometry, linop
from .closedform import ModelParams, ModeIndex, derive_params

__version__ = "0.1.0"

__all__ = [
    "affine",
    "asymptotics",
    "closedform",
    "evolve",
    "geometry",
    "linop",
    "ModelParams",
    "ModeIndex",
    "derive_params",
    "__version__",
]
