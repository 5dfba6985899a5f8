"""Symmetry detection, over-symmetric approximations and subgroup selection."""

from .automorphisms import exact_automorphisms, is_automorphism, template_generators
from .bmf import BMFResult, boolean_rank_approx
from .clustering import OSAModel, cluster_weights, compose_osa, osa_from_models, zero_unaries
from .heuristic import HeuristicConfig, subgroup_heuristic
from .refinement import ColorPartition, color_refinement
from .relational import osa_from_groundings, symmetrize_relation

__all__ = [
    "BMFResult",
    "ColorPartition",
    "HeuristicConfig",
    "OSAModel",
    "boolean_rank_approx",
    "cluster_weights",
    "color_refinement",
    "compose_osa",
    "exact_automorphisms",
    "is_automorphism",
    "osa_from_groundings",
    "osa_from_models",
    "subgroup_heuristic",
    "symmetrize_relation",
    "template_generators",
    "zero_unaries",
]
