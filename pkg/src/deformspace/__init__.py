"""deformspace: explorable 2D deformation subspaces over shape generators.

Builds a 2D exploration space spanning a set of landmark meshes by
minimizing FEM-discretized Dirichlet energy on a latent-variable shape
generator's manifold, with geodesic boundary conditions on Delaunay
edges, then turns 2D trajectories into RBF flow fields that deform the
original meshes in real time, topology switches included.
"""

from .errors import (
    BundleError,
    DeformspaceError,
    DegenerateInputError,
    InvalidInputError,
    NumericalError,
    OutsideDomainError,
    TrainingDivergedError,
)

__version__ = "0.1.0"

__all__ = [
    "BundleError",
    "DeformspaceError",
    "DegenerateInputError",
    "InvalidInputError",
    "NumericalError",
    "OutsideDomainError",
    "TrainingDivergedError",
    "__version__",
]
