"""Model zoo: Ising lattices, Chimera graphs and grounded Markov logic networks."""

from .chimera import ChimeraSpec, chimera
from .ising import IsingSpec, ising_grid
from .mln import Evidence, GroundModel, MLNProgram, mln_ground, parse_evidence, parse_program

__all__ = [
    "ChimeraSpec",
    "Evidence",
    "GroundModel",
    "IsingSpec",
    "MLNProgram",
    "chimera",
    "ising_grid",
    "mln_ground",
    "parse_evidence",
    "parse_program",
]
