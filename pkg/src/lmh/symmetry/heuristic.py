"""
Selection of small symmetric subgroups Sym(O') inside each orbit.

An orbital kernel only re-evaluates potentials its group can change, so the
heuristic looks for subsets O' of an orbit that are large while moving at
most K potentials of the original model.
"""

from __future__ import annotations

import logging
from itertools import combinations
from typing import FrozenSet, List, Literal, Optional, Sequence, Set

from pydantic import BaseModel, ConfigDict, Field

from ..group import PermutationGroup, VariableOrbitPartition, symmetric_moved_potentials
from ..model import Model

logger = logging.getLogger(__name__)


class HeuristicConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    K: int = Field(..., ge=1, description="Maximum number of potentials a selected subgroup may move")
    seed_rule: Literal["max-shared-pair"] = "max-shared-pair"


def _moved_count(model: Model, support: Set[int]) -> int:
    return len(symmetric_moved_potentials(support, model))


def _seed_pair(model: Model, candidates: Sequence[int], limit: int) -> Optional[Set[int]]:
    """Pair sharing the most potentials among pairs moving at most `limit` potentials."""
    best_key, best = None, None
    incident = model.var_to_potentials
    for a, b in combinations(candidates, 2):
        moved = _moved_count(model, {a, b})
        if moved > limit:
            continue
        shared = len(set(incident[a]) & set(incident[b]))
        key = (-shared, moved, a, b)
        if best_key is None or key < best_key:
            best_key, best = key, {a, b}
    return best


def _grow(model: Model, seed: Set[int], candidates: Sequence[int], limit: int) -> Set[int]:
    chosen = set(seed)
    moved = _moved_count(model, chosen)
    while True:
        options = [v for v in candidates if v not in chosen]
        if not options:
            return chosen
        count, v = min((_moved_count(model, chosen | {v}), v) for v in options)
        # stop once the bound is exceeded or variables-per-moved-potential would drop
        if count > limit or (len(chosen) + 1) * moved < len(chosen) * count:
            return chosen
        chosen.add(v)
        moved = count


def subgroup_heuristic(
    orbits: VariableOrbitPartition,
    model: Model,
    config: HeuristicConfig,
) -> List[PermutationGroup]:
    """Disjoint symmetric subgroups, each moving at most `config.K` potentials of `model`."""
    groups: List[PermutationGroup] = []
    for orbit in sorted(orbits.non_trivial(), key=min):
        remaining = sorted(orbit)
        while len(remaining) >= 2:
            seed = _seed_pair(model, remaining, config.K)
            if seed is None:
                logger.debug("Orbit starting at %d: no pair within K=%d", remaining[0], config.K)
                break
            chosen: FrozenSet[int] = frozenset(_grow(model, seed, remaining, config.K))
            groups.append(PermutationGroup.symmetric(sorted(chosen), model.num_variables))
            remaining = [v for v in remaining if v not in chosen]
    logger.info("Subgroup heuristic selected %d group(s) with K=%d", len(groups), config.K)
    return groups
