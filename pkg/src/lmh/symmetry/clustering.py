"""
Over-symmetric approximations (OSAs) built by editing potential weights.

Every OSA keeps the source model's structure: same variables, same scopes,
same potential ids. Only log-tables change, and each change is recorded so
the source model can be restored exactly.
"""

from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.vq import kmeans2

from ..app.dependencies import get_settings
from ..errors import InvalidModelError
from ..model import Model, Potential

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PotentialReplacement:
    potential_id: int
    original: Tuple[float, ...]
    replacement: Tuple[float, ...]


@dataclass(frozen=True)
class OSAModel:
    model: Model
    source: Model
    replacements: Tuple[PotentialReplacement, ...]
    label: str = "osa"

    def restore(self) -> Model:
        """The source model, rebuilt from the recorded original weights."""
        return with_tables(self.model, {r.potential_id: r.original for r in self.replacements})

    def provenance(self) -> List[dict]:
        return [
            {"potential_id": r.potential_id, "original": list(r.original), "replacement": list(r.replacement)}
            for r in self.replacements
        ]


def with_tables(model: Model, tables: Mapping[int, Sequence[float]]) -> Model:
    """Copy of `model` with the given potentials' log-tables swapped in."""
    potentials = [
        Potential(id=p.id, scope=p.scope, log_table=tuple(float(x) for x in tables[p.id])) if p.id in tables else p
        for p in model.potentials
    ]
    return Model(variables=model.variables, potentials=potentials, template=model.template)


def osa_from_models(source: Model, symmetrized: Model, label: str = "osa") -> OSAModel:
    """Wrap a structurally identical model as an OSA of `source`, diffing the tables."""
    if source.cardinalities != symmetrized.cardinalities or [p.scope for p in source.potentials] != [
        p.scope for p in symmetrized.potentials
    ]:
        raise InvalidModelError("An OSA must keep the source model's variables and potential scopes")
    replacements = tuple(
        PotentialReplacement(potential_id=a.id, original=a.log_table, replacement=b.log_table)
        for a, b in zip(source.potentials, symmetrized.potentials)
        if a.log_table != b.log_table
    )
    return OSAModel(model=symmetrized, source=source, replacements=replacements, label=label)


def cluster_weights(
    model: Model,
    num_clusters: int,
    seed: Optional[int] = None,
    max_iterations: Optional[int] = None,
) -> OSAModel:
    """Snap potential tables to k-means centroids, separately per scope shape.

    Distinct tables are clustered, so duplicated weights do not pull centroids.
    Shape classes with at most `num_clusters` distinct tables are left alone.
    """
    if num_clusters < 1:
        raise ValueError(f"Number of clusters must be at least 1, got {num_clusters}")
    settings = get_settings()
    seed = settings.kmeans_seed if seed is None else seed
    max_iterations = settings.kmeans_iterations if max_iterations is None else max_iterations
    rng = np.random.default_rng(seed)

    by_shape: Dict[Tuple[int, ...], List[Potential]] = defaultdict(list)
    for pot in model.potentials:
        by_shape[tuple(model.cardinalities[v] for v in pot.scope)].append(pot)

    tables: Dict[int, Tuple[float, ...]] = {}
    for shape, pots in sorted(by_shape.items()):
        distinct = sorted({p.log_table for p in pots})
        if len(distinct) <= num_clusters:
            continue
        data = np.asarray(distinct, dtype=float)
        with warnings.catch_warnings():
            # empty clusters are simply unused
            warnings.simplefilter("ignore")
            _, labels = kmeans2(data, num_clusters, iter=max_iterations, minit="++", seed=rng)
        centroid_of = {}
        for label in np.unique(labels):
            centroid = data[labels == label].mean(axis=0)
            for row in np.flatnonzero(labels == label):
                centroid_of[distinct[row]] = tuple(float(x) for x in centroid)
        for pot in pots:
            tables[pot.id] = centroid_of[pot.log_table]
        logger.debug("Shape %s: %d distinct tables -> %d clusters", shape, len(distinct), len(np.unique(labels)))

    return osa_from_models(model, with_tables(model, tables), label=f"kmeans-{num_clusters}")


def zero_unaries(model: Model) -> OSAModel:
    """Replace every unary potential by the all-zero table."""
    tables = {
        p.id: (0.0,) * len(p.log_table) for p in model.potentials if len(p.scope) == 1
    }
    return osa_from_models(model, with_tables(model, tables), label="zero-unaries")


def compose_osa(first: OSAModel, second: OSAModel) -> OSAModel:
    """Chain two approximations: `second` must have been built from `first.model`."""
    if second.source != first.model:
        raise InvalidModelError("The second OSA was not built from the first OSA's model")
    return osa_from_models(first.source, second.model, label=f"{first.label}+{second.label}")
