"""Greedy association-based Boolean matrix factorization."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..app.dependencies import get_settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BMFResult:
    left: np.ndarray
    right: np.ndarray
    error: int

    @property
    def rank(self) -> int:
        return self.right.shape[0]

    @property
    def reconstruction(self) -> np.ndarray:
        return boolean_product(self.left, self.right)


def boolean_product(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return (left.astype(np.int64) @ right.astype(np.int64)) > 0


def association_candidates(matrix: np.ndarray, threshold: float) -> np.ndarray:
    """Distinct non-empty rows of the thresholded column association matrix."""
    x = matrix.astype(np.int64)
    co = x.T @ x
    support = np.diag(co).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        confidence = np.where(support[:, None] > 0, co / support[:, None], 0.0)
    candidates = confidence >= threshold
    candidates = candidates[candidates.any(axis=1)]
    if candidates.size == 0:
        return candidates
    return np.unique(candidates, axis=0)[::-1]


def boolean_rank_approx(matrix, rank: int, threshold: Optional[float] = None) -> BMFResult:
    """Rank-`rank` Boolean factors L (n x r), R (r x m) minimizing mismatches greedily.

    Each round picks the candidate basis row and the rows using it that remove
    the most uncovered ones net of newly covered zeros. Rounds stop early when
    no candidate helps; unused factors stay all-zero.
    """
    x = np.asarray(matrix, dtype=bool)
    if x.ndim != 2:
        raise ValueError(f"Expected a 2-D Boolean matrix, got shape {x.shape}")
    if rank < 1:
        raise ValueError(f"Rank must be at least 1, got {rank}")
    threshold = get_settings().asso_threshold if threshold is None else threshold
    n, m = x.shape
    left = np.zeros((n, rank), dtype=bool)
    right = np.zeros((rank, m), dtype=bool)
    covered = np.zeros_like(x)
    candidates = association_candidates(x, threshold).astype(np.int64)

    for step in range(rank):
        if candidates.size == 0:
            break
        ones = (x & ~covered).astype(np.int64)
        zeros = (~x & ~covered).astype(np.int64)
        gain = ones @ candidates.T - zeros @ candidates.T
        totals = np.maximum(gain, 0).sum(axis=0)
        best = int(np.argmax(totals))
        if totals[best] <= 0:
            logger.debug("Boolean factorization stopped after %d factor(s)", step)
            break
        rows = gain[:, best] > 0
        basis = candidates[best].astype(bool)
        left[:, step] = rows
        right[step] = basis
        covered |= np.outer(rows, basis)

    error = int(np.count_nonzero(x != covered))
    return BMFResult(left=left, right=right, error=error)
