"""Numerical toolkit for macroscopic particle-transport light-cone bounds in lattice gases."""
from . import bounds, evolution, fock, free_oracle, geometry, hamiltonian, tilting
from .bounds import log_norm_bound, massmat_bound, physical_units_bound
from .evolution import cone_norm, evolve, krylov_expm_multiply
from .fock import build_basis, threshold_projector
from .geometry import LatticeGraph, separation
from .hamiltonian import BoundParams, PotentialSpec, assemble, nearest_neighbor

__version__ = "0.1.0"

__all__ = [
    "bounds", "evolution", "fock", "free_oracle", "geometry", "hamiltonian", "tilting",
    "log_norm_bound", "massmat_bound", "physical_units_bound", "cone_norm", "evolve", "krylov_expm_multiply",
    "build_basis", "threshold_projector", "LatticeGraph", "separation", "BoundParams", "PotentialSpec",
    "assemble", "nearest_neighbor",
]
