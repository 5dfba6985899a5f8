"""
Permutation groups acting on variable indices.

A permutation g acts on states by relocating values: y = x^g satisfies
y[g(v)] = x[v]. With composition (g * h)(v) = g(h(v)) the action law reads
(x^g)^h = x^(h * g).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .app.dependencies import get_settings
from .errors import CardinalityMismatchError, DegreeMismatchError
from .model import Model, State

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Permutation:
    """A bijection on 0..n-1 stored as its image array."""

    image: Tuple[int, ...]

    def __post_init__(self):
        if sorted(self.image) != list(range(len(self.image))):
            raise ValueError(f"Not a permutation image: {self.image}")

    @classmethod
    def identity(cls, degree: int) -> "Permutation":
        return cls(tuple(range(degree)))

    @classmethod
    def from_cycles(cls, cycles: Iterable[Sequence[int]], degree: int) -> "Permutation":
        """Build from disjoint cycles; (a b c) maps a->b, b->c, c->a."""
        image = list(range(degree))
        seen: Set[int] = set()
        for cycle in cycles:
            for point in cycle:
                if not 0 <= point < degree:
                    raise ValueError(f"Cycle point {point} outside degree {degree}")
                if point in seen:
                    raise ValueError(f"Cycles are not disjoint at point {point}")
                seen.add(point)
            for a, b in zip(cycle, list(cycle[1:]) + list(cycle[:1])):
                image[a] = b
        return cls(tuple(image))

    @property
    def degree(self) -> int:
        return len(self.image)

    def __call__(self, v: int) -> int:
        return self.image[v]

    def __mul__(self, other: "Permutation") -> "Permutation":
        return compose(self, other)

    def inverse(self) -> "Permutation":
        inv = [0] * self.degree
        for v, w in enumerate(self.image):
            inv[w] = v
        return Permutation(tuple(inv))

    @property
    def is_identity(self) -> bool:
        return all(v == w for v, w in enumerate(self.image))

    def support(self) -> FrozenSet[int]:
        return frozenset(v for v, w in enumerate(self.image) if v != w)

    def to_cycles(self) -> List[List[int]]:
        """Non-trivial disjoint cycles, each starting at its smallest point."""
        cycles, seen = [], set()
        for start in range(self.degree):
            if start in seen or self.image[start] == start:
                continue
            cycle, v = [], start
            while v not in seen:
                seen.add(v)
                cycle.append(v)
                v = self.image[v]
            cycles.append(cycle)
        return cycles


def compose(g: Permutation, h: Permutation) -> Permutation:
    """(g * h)(v) = g(h(v))."""
    if g.degree != h.degree:
        raise DegreeMismatchError(f"Cannot compose permutations of degree {g.degree} and {h.degree}")
    gi = g.image
    return Permutation(tuple(gi[w] for w in h.image))


def check_cardinalities(g: Permutation, cardinalities: Sequence[int]) -> None:
    if g.degree != len(cardinalities):
        raise DegreeMismatchError(f"Permutation degree {g.degree} does not match {len(cardinalities)} variables")
    for v, w in enumerate(g.image):
        if cardinalities[v] != cardinalities[w]:
            raise CardinalityMismatchError(
                f"Permutation maps variable {v} (cardinality {cardinalities[v]}) "
                f"to variable {w} (cardinality {cardinalities[w]})"
            )


def apply_to_state(g: Permutation, x: Sequence[int], model: Optional[Model] = None) -> State:
    """x^g, defined by y[g(v)] = x[v]."""
    if len(x) != g.degree:
        raise DegreeMismatchError(f"State of length {len(x)} cannot be acted on by degree {g.degree}")
    if model is not None:
        check_cardinalities(g, model.cardinalities)
    y = [0] * len(x)
    for v, w in enumerate(g.image):
        y[w] = x[v]
    return y


@dataclass(frozen=True)
class VariableOrbitPartition:
    orbit_of: Tuple[int, ...]
    orbits: Tuple[FrozenSet[int], ...]

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "VariableOrbitPartition":
        """Relabel arbitrary labels so orbit ids follow smallest members."""
        relabel: dict = {}
        orbit_of = []
        members: List[Set[int]] = []
        for v, label in enumerate(labels):
            if label not in relabel:
                relabel[label] = len(members)
                members.append(set())
            orbit_of.append(relabel[label])
            members[relabel[label]].add(v)
        return cls(orbit_of=tuple(orbit_of), orbits=tuple(frozenset(m) for m in members))

    def non_trivial(self) -> List[FrozenSet[int]]:
        return [o for o in self.orbits if len(o) > 1]


@dataclass(frozen=True)
class PermutationGroup:
    """A group given by generators.

    `symmetric_support` marks Sym(O') groups: elements are then drawn as exact
    uniform shuffles of O' instead of by product replacement.
    """

    generators: Tuple[Permutation, ...]
    symmetric_support: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not self.generators:
            raise ValueError("A permutation group needs at least one generator (identity allowed)")
        degrees = {g.degree for g in self.generators}
        if len(degrees) != 1:
            raise DegreeMismatchError(f"Generators have mixed degrees {sorted(degrees)}")

    @classmethod
    def trivial(cls, degree: int) -> "PermutationGroup":
        return cls((Permutation.identity(degree),))

    @classmethod
    def symmetric(cls, support: Sequence[int], degree: int) -> "PermutationGroup":
        """Sym(support), generated by one transposition and one full cycle."""
        support = tuple(sorted(support))
        if len(support) < 2:
            return cls.trivial(degree)
        transposition = Permutation.from_cycles([support[:2]], degree)
        cycle = Permutation.from_cycles([support], degree)
        generators = (transposition,) if cycle == transposition else (transposition, cycle)
        return cls(generators, symmetric_support=support)

    @property
    def degree(self) -> int:
        return self.generators[0].degree

    @cached_property
    def moved_variables(self) -> FrozenSet[int]:
        return frozenset().union(*(g.support() for g in self.generators))

    @cached_property
    def orbits(self) -> VariableOrbitPartition:
        return variable_orbits(self)

    def check_model(self, model: Model) -> None:
        for g in self.generators:
            check_cardinalities(g, model.cardinalities)


def variable_orbits(group: PermutationGroup) -> VariableOrbitPartition:
    """Finest partition closed under every generator."""
    n = group.degree
    rows = np.concatenate([np.arange(n) for _ in group.generators])
    cols = np.concatenate([np.asarray(g.image) for g in group.generators])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="weak")
    return VariableOrbitPartition.from_labels(labels.tolist())


def moved_sets(group: PermutationGroup, model: Model) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """(moved variables, ids of potentials whose scope meets them)."""
    if group.degree != model.num_variables:
        raise DegreeMismatchError(f"Group degree {group.degree} does not match {model.num_variables} variables")
    moved = group.moved_variables
    potentials = frozenset(pid for v in moved for pid in model.var_to_potentials[v])
    return moved, potentials


def symmetric_moved_potentials(support: Iterable[int], model: Model) -> FrozenSet[int]:
    """Potentials whose value can change under some element of Sym(support).

    A potential meeting the support is fixed only when its scope contains the
    whole support and its table is invariant under reordering those positions.
    """
    support = frozenset(support)
    touched = {pid for v in support for pid in model.var_to_potentials[v]}
    moved = set()
    for pid in touched:
        scope = model.potentials[pid].scope
        if support <= set(scope) and _symmetric_in(model, pid, [scope.index(v) for v in sorted(support)]):
            continue
        moved.add(pid)
    return frozenset(moved)


def _symmetric_in(model: Model, pid: int, positions: List[int]) -> bool:
    pot = model.potentials[pid]
    shape = tuple(model.cardinalities[v] for v in pot.scope)
    table = np.asarray(pot.log_table).reshape(shape)
    for a, b in zip(positions, positions[1:]):
        if shape[a] != shape[b] or not np.array_equal(table, np.swapaxes(table, a, b)):
            return False
    return True


def enumerate_elements(group: PermutationGroup, max_order: int = 100_000) -> List[Permutation]:
    """All group elements by breadth-first closure under the generators."""
    identity = Permutation.identity(group.degree)
    seen = {identity.image: identity}
    queue = deque([identity])
    while queue:
        element = queue.popleft()
        for g in group.generators:
            product = compose(g, element)
            if product.image not in seen:
                if len(seen) >= max_order:
                    raise ValueError(f"Group order exceeds enumeration limit {max_order}")
                seen[product.image] = product
                queue.append(product)
    return list(seen.values())


class ProductReplacementSampler:
    """Near-uniform random group elements; chain-private mutable state.

    Slots start as the generators repeated cyclically; each draw performs one
    replacement s_i <- s_i * s_j^(+-1) (or s_j^(+-1) * s_i) and returns s_i.
    """

    def __init__(
        self,
        group: PermutationGroup,
        rng: np.random.Generator,
        min_slots: Optional[int] = None,
        burn_in: Optional[int] = None,
    ):
        settings = get_settings()
        min_slots = settings.pr_min_slots if min_slots is None else min_slots
        burn_in = settings.pr_burn_in if burn_in is None else burn_in
        self.group = group
        self.rng = rng
        self.num_slots = max(min_slots, 2 * len(group.generators))
        self.burn_in = burn_in
        self._slots = [group.generators[i % len(group.generators)] for i in range(self.num_slots)]
        for _ in range(burn_in):
            self._replace()

    def _replace(self) -> Permutation:
        i = int(self.rng.integers(self.num_slots))
        j = int(self.rng.integers(self.num_slots - 1))
        if j >= i:
            j += 1
        other = self._slots[j]
        if self.rng.random() < 0.5:
            other = other.inverse()
        if self.rng.random() < 0.5:
            self._slots[i] = compose(self._slots[i], other)
        else:
            self._slots[i] = compose(other, self._slots[i])
        return self._slots[i]

    def draw(self) -> Permutation:
        return self._replace()


def shuffle_element(support: Sequence[int], degree: int, rng: np.random.Generator) -> Permutation:
    """Exactly uniform element of Sym(support)."""
    image = list(range(degree))
    for v, w in zip(support, rng.permutation(len(support)).tolist()):
        image[v] = support[w]
    return Permutation(tuple(image))


class ElementSampler:
    """Draws group elements for one chain: shuffle path for Sym(O'), product replacement otherwise."""

    def __init__(self, group: PermutationGroup, rng: np.random.Generator):
        self.group = group
        self.rng = rng
        self._product_replacement = None
        if group.symmetric_support is None:
            self._product_replacement = ProductReplacementSampler(group, rng)

    def draw(self) -> Permutation:
        if self._product_replacement is None:
            return shuffle_element(self.group.symmetric_support, self.group.degree, self.rng)
        return self._product_replacement.draw()


def random_element(group: PermutationGroup, rng: np.random.Generator) -> Permutation:
    """One approximately uniform element (exactly uniform for Sym(O') groups).

    Builds a fresh sampler per call; chains keep an ElementSampler instead.
    """
    return ElementSampler(group, rng).draw()

