"""Boundary spectra of second-order elliptic operators on polygons.

Partial Dirichlet-to-Neumann matrices as Schur complements, Steklov
and Robin eigenvalue duality, strong-coupling Dirichlet limits,
boundary semigroups with order properties, and gauge experiments
relating coefficient sets with equal boundary data.
"""

__version__ = "0.1.0"

from .coeffs import CoefficientSet, Diffeo, certify, pullback
from .mesh import (
    BoundaryPartition,
    Mesh,
    build_polygon_mesh,
    build_structured_square,
    partition_boundary,
    refine,
)
from .assemble import AssembledSystem, assemble, dirichlet_system, robin_matrix
from .dtn import DtnMatrix, dtn_matrix, harmonic_extension
from .spectral import (
    Spectrum,
    dirichlet_spectrum,
    robin_spectrum,
    steklov_spectrum,
    sym_geneig,
)
from .semigroup import BoundarySemigroup, build_semigroup, evolve

__all__ = [
    "__version__",
    "Mesh",
    "BoundaryPartition",
    "build_structured_square",
    "build_polygon_mesh",
    "partition_boundary",
    "refine",
    "CoefficientSet",
    "Diffeo",
    "certify",
    "pullback",
    "AssembledSystem",
    "assemble",
    "robin_matrix",
    "dirichlet_system",
    "DtnMatrix",
    "dtn_matrix",
    "harmonic_extension",
    "Spectrum",
    "sym_geneig",
    "dirichlet_spectrum",
    "robin_spectrum",
    "steklov_spectrum",
    "BoundarySemigroup",
    "build_semigroup",
    "evolve",
]
