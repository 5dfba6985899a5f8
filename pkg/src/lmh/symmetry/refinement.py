"""Color refinement over the variable/potential incidence graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Hashable, List, Optional, Sequence, Tuple

from ..model import Model


@dataclass(frozen=True)
class ColorPartition:
    variable_colors: Tuple[int, ...]
    potential_colors: Tuple[int, ...]
    iterations: int
    stable: bool

    @property
    def num_variable_colors(self) -> int:
        return len(set(self.variable_colors))

    @property
    def num_potential_colors(self) -> int:
        return len(set(self.potential_colors))

    def variable_classes(self) -> List[FrozenSet[int]]:
        classes: Dict[int, set] = {}
        for v, color in enumerate(self.variable_colors):
            classes.setdefault(color, set()).add(v)
        return [frozenset(c) for _, c in sorted(classes.items())]

    def same_partition(self, other: "ColorPartition") -> bool:
        return _canonical(self.variable_colors) == _canonical(other.variable_colors) and _canonical(
            self.potential_colors
        ) == _canonical(other.potential_colors)


def _canonical(colors: Sequence[int]) -> Tuple[int, ...]:
    first: Dict[int, int] = {}
    return tuple(first.setdefault(c, len(first)) for c in colors)


def _dense(signatures: Sequence[Hashable]) -> Tuple[int, ...]:
    ids = {sig: i for i, sig in enumerate(sorted(set(signatures)))}
    return tuple(ids[sig] for sig in signatures)


def potential_signature(model: Model, pid: int) -> Tuple:
    """Scope-order invariant: sorted scope cardinalities and sorted table entries."""
    pot = model.potentials[pid]
    cards = tuple(sorted(model.cardinalities[v] for v in pot.scope))
    return cards, tuple(sorted(pot.log_table))


def color_refinement(model: Model, max_iterations: Optional[int] = None) -> ColorPartition:
    """Alternate potential and variable recoloring until stable or `max_iterations` rounds."""
    scopes = [p.scope for p in model.potentials]
    incident = model.var_to_potentials
    pot_colors = _dense([potential_signature(model, pid) for pid in range(len(scopes))])
    var_colors = _dense(
        [
            (model.cardinalities[v], tuple(sorted(pot_colors[p] for p in incident[v])))
            for v in range(model.num_variables)
        ]
    )
    rounds, stable = 0, False
    while max_iterations is None or rounds < max_iterations:
        new_pot = _dense([(pot_colors[p], tuple(sorted(var_colors[v] for v in scope))) for p, scope in enumerate(scopes)])
        new_var = _dense(
            [(var_colors[v], tuple(sorted(new_pot[p] for p in incident[v]))) for v in range(model.num_variables)]
        )
        rounds += 1
        if len(set(new_pot)) == len(set(pot_colors)) and len(set(new_var)) == len(set(var_colors)):
            stable = True
            break
        pot_colors, var_colors = new_pot, new_var
    return ColorPartition(variable_colors=var_colors, potential_colors=pot_colors, iterations=rounds, stable=stable)
