"""Maslov-type invariants of Hamiltonian loops from chart decompositions."""
from .errors import HamloopError
from .geom import QuadratureSpec
from .invariant import (Atlas, HamiltonianLoopModel, InvariantReport, chern_pairing,
                        compute_invariant, compute_invariant_ladder)
from .symp_core import SymplecticMatrix, maslov_index, rho

__all__ = [
    "Atlas", "HamiltonianLoopModel", "HamloopError", "InvariantReport", "QuadratureSpec",
    "SymplecticMatrix", "chern_pairing", "compute_invariant", "compute_invariant_ladder",
    "maslov_index", "rho",
]
__version__ = "0.1.0"
