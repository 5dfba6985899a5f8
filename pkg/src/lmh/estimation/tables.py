"""Marginal tables, sample-stream estimation and KL reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import rel_entr

from ..app.dependencies import get_settings
from ..errors import EmptySampleStreamError, ShapeMismatchError

CSV_HEADER = ("variable_id", "value", "probability")


@dataclass(frozen=True)
class MarginalTable:
    """Per-variable value distributions plus the number of sample points behind them."""

    probabilities: Tuple[np.ndarray, ...]
    sample_count: int = 0
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for v, p in enumerate(self.probabilities):
            if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
                raise ValueError(f"Marginal of variable {v} is not a probability vector: {p}")

    @classmethod
    def from_counts(cls, counts: Sequence[Sequence[float]], sample_count: int, **provenance) -> "MarginalTable":
        if sample_count <= 0:
            raise EmptySampleStreamError("Cannot estimate marginals from an empty sample stream")
        probabilities = tuple(np.asarray(c, dtype=float) / sample_count for c in counts)
        return cls(probabilities=probabilities, sample_count=sample_count, provenance=provenance)

    @property
    def num_variables(self) -> int:
        return len(self.probabilities)

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return tuple(len(p) for p in self.probabilities)

    def max_abs_error(self, other: "MarginalTable") -> float:
        _check_shapes(self, other)
        if not self.probabilities:
            return 0.0
        return max(float(np.max(np.abs(p - q))) for p, q in zip(self.probabilities, other.probabilities))

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for v, p in enumerate(self.probabilities):
                for value, prob in enumerate(p):
                    writer.writerow((v, value, repr(float(prob))))

    @classmethod
    def read_csv(cls, path: Path) -> "MarginalTable":
        rows: Dict[int, Dict[int, float]] = {}
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise ValueError(f"Unexpected marginal CSV header in {path}: {reader.fieldnames}")
            for row in reader:
                rows.setdefault(int(row["variable_id"]), {})[int(row["value"])] = float(row["probability"])
        probabilities = []
        for v in range(len(rows)):
            if v not in rows:
                raise ValueError(f"Marginal CSV {path} is missing variable {v}")
            values = rows[v]
            probabilities.append(np.array([values[k] for k in range(len(values))]))
        return cls(probabilities=tuple(probabilities), provenance={"source": str(path)})


@dataclass(frozen=True)
class KLReport:
    per_variable: Tuple[float, ...]
    average: float
    epsilon: float
    direction: str = "KL(truth || estimate)"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "average_kl": self.average,
            "epsilon": self.epsilon,
            "direction": self.direction,
            "per_variable": list(self.per_variable),
        }


def _check_shapes(a: MarginalTable, b: MarginalTable) -> None:
    if a.cardinalities != b.cardinalities:
        raise ShapeMismatchError(
            f"Marginal tables disagree on variables/cardinalities: {a.cardinalities} vs {b.cardinalities}"
        )


def estimate_marginals(samples: Iterable[Sequence[int]], cardinalities: Sequence[int]) -> MarginalTable:
    """Empirical value frequencies over a stream of sample points."""
    counts = [np.zeros(card) for card in cardinalities]
    total = 0
    for sample in samples:
        for v, value in enumerate(sample):
            counts[v][value] += 1
        total += 1
    return MarginalTable.from_counts(counts, total, source="samples")


def merge(tables: Sequence[MarginalTable]) -> MarginalTable:
    """Count-weighted average, identical to estimating from the concatenated streams."""
    tables = [t for t in tables if t.sample_count > 0]
    if not tables:
        raise EmptySampleStreamError("Nothing to merge")
    for t in tables[1:]:
        _check_shapes(tables[0], t)
    total = sum(t.sample_count for t in tables)
    counts = [sum(t.probabilities[v] * t.sample_count for t in tables) for v in range(tables[0].num_variables)]
    return MarginalTable.from_counts(counts, total, source="merge", parts=len(tables))


def avg_kl(truth: MarginalTable, estimate: MarginalTable, epsilon: Optional[float] = None) -> KLReport:
    """Average over variables of KL(truth || clamp(estimate, eps, 1-eps) renormalized)."""
    if epsilon is None:
        epsilon = get_settings().kl_epsilon
    if not 0 < epsilon <= 0.01:
        raise ValueError(f"Smoothing epsilon must lie in (0, 0.01], got {epsilon}")
    _check_shapes(truth, estimate)
    values: List[float] = []
    for p, q in zip(truth.probabilities, estimate.probabilities):
        q = np.clip(q, epsilon, 1.0 - epsilon)
        q = q / q.sum()
        values.append(max(float(np.sum(rel_entr(p, q))), 0.0))
    average = float(np.mean(values)) if values else 0.0
    return KLReport(per_variable=tuple(values), average=average, epsilon=epsilon)
