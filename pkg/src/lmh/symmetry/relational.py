"""Evidence symmetrization: low Boolean-rank approximations of binary relations."""

import logging
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, InvalidModelError
from ..generators.mln import Evidence, GroundModel, MLNProgram
from .bmf import BMFResult, boolean_rank_approx
from .clustering import OSAModel, osa_from_models

logger = logging.getLogger(__name__)


def relation_matrix(program: MLNProgram, evidence: Evidence, predicate: str) -> Tuple[np.ndarray, tuple, tuple]:
    """Bit matrix of a binary predicate's true hard evidence, with row and column constants."""
    if predicate not in program.predicates or program.arity(predicate) != 2:
        raise ConfigurationError(f"Relation symmetrization needs a binary predicate, got '{predicate}'")
    rows = program.domains[program.predicates[predicate][0]]
    cols = program.domains[program.predicates[predicate][1]]
    matrix = np.zeros((len(rows), len(cols)), dtype=bool)
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            matrix[i, j] = evidence.hard.get((predicate, (a, b)), False)
    return matrix, rows, cols


def symmetrize_relation(
    program: MLNProgram,
    evidence: Evidence,
    predicate: str,
    rank: int,
    threshold: Optional[float] = None,
) -> Tuple[Evidence, BMFResult]:
    """Replace the truth values of a binary relation's observed atoms by its rank-`rank` reconstruction.

    Unobserved atoms stay unobserved, so grounding the result gives a model
    with the same variables and scopes as grounding the original evidence.
    """
    matrix, rows, cols = relation_matrix(program, evidence, predicate)
    result = boolean_rank_approx(matrix, rank, threshold=threshold)
    recon = result.reconstruction
    updates = {}
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            atom = (predicate, (a, b))
            if atom in evidence.hard:
                updates[atom] = bool(recon[i, j])
    logger.info("Rank-%d approximation of %s: %d mismatched entries", rank, predicate, result.error)
    return evidence.with_hard(updates), result


def osa_from_groundings(original: GroundModel, symmetrized: GroundModel, label: str = "osa") -> OSAModel:
    if original.atoms != symmetrized.atoms:
        raise InvalidModelError("Groundings differ in their ground atoms")
    return osa_from_models(original.model, symmetrized.model, label=label)
