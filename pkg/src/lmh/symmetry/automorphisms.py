"""
Exact automorphisms of desk-scale models.

A permutation g is an automorphism when relabelling every potential's scope by
g leaves the multiset of potentials, compared as functions, unchanged; then
log_score(x) == log_score(x^g) for every state x.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from typing import Dict, List, Literal, Optional, Sequence, Set, Tuple

import numpy as np

from ..app.dependencies import get_settings
from ..errors import ConfigurationError, SearchLimitError
from ..generators.chimera import chimera_variable
from ..group import Permutation, PermutationGroup
from ..model import Model
from .refinement import color_refinement

logger = logging.getLogger(__name__)

Form = Tuple[Tuple[int, ...], bytes]


class PotentialForms:
    """Canonical (sorted scope, transposed table) forms of a model's potentials."""

    def __init__(self, model: Model):
        self.model = model
        self._tables = []
        for pot in model.potentials:
            shape = tuple(model.cardinalities[v] for v in pot.scope)
            self._tables.append(np.asarray(pot.log_table, dtype=float).reshape(shape))
        self.forms = Counter(self.relabelled(pid, lambda v: v) for pid in range(len(model.potentials)))

    def relabelled(self, pid: int, mapping) -> Form:
        scope = tuple(mapping(v) for v in self.model.potentials[pid].scope)
        order = np.argsort(scope, kind="stable")
        table = np.ascontiguousarray(np.transpose(self._tables[pid], order)) if scope else self._tables[pid]
        # +0.0 folds negative zeros so equal tables compare equal
        return tuple(scope[i] for i in order), (table + 0.0).tobytes()

    def is_automorphism(self, g: Permutation) -> bool:
        if g.degree != self.model.num_variables:
            return False
        cards = self.model.cardinalities
        if any(cards[v] != cards[w] for v, w in enumerate(g.image)):
            return False
        image = g.image
        mapped = Counter(self.relabelled(pid, image.__getitem__) for pid in range(len(self.model.potentials)))
        return mapped == self.forms


def is_automorphism(model: Model, g: Permutation) -> bool:
    return PotentialForms(model).is_automorphism(g)


def grid_generators(rows: int, cols: int) -> List[Permutation]:
    """Rotation and reflection for square lattices, both reflections otherwise."""
    n = rows * cols

    def perm(fn) -> Permutation:
        image = [0] * n
        for r in range(rows):
            for c in range(cols):
                nr, nc = fn(r, c)
                image[r * cols + c] = nr * cols + nc
        return Permutation(tuple(image))

    if rows == cols:
        candidates = [perm(lambda r, c: (c, rows - 1 - r)), perm(lambda r, c: (r, cols - 1 - c))]
    else:
        candidates = [perm(lambda r, c: (r, cols - 1 - c)), perm(lambda r, c: (rows - 1 - r, c))]
    return [g for g in candidates if not g.is_identity]


def chimera_generators(rows: int, cols: int) -> List[Permutation]:
    """Lane permutations applied to every cell, cell-grid reflections, transpose with side swap."""
    n = 8 * rows * cols

    def perm(fn) -> Permutation:
        image = [0] * n
        for i in range(rows):
            for j in range(cols):
                for side in (0, 1):
                    for k in range(4):
                        image[chimera_variable(i, j, side, k, cols)] = chimera_variable(*fn(i, j, side, k), cols)
        return Permutation(tuple(image))

    candidates = []
    for lane_side in (0, 1):
        candidates.append(perm(lambda i, j, s, k, ls=lane_side: (i, j, s, {0: 1, 1: 0}.get(k, k) if s == ls else k)))
        candidates.append(perm(lambda i, j, s, k, ls=lane_side: (i, j, s, (k + 1) % 4 if s == ls else k)))
    candidates.append(perm(lambda i, j, s, k: (rows - 1 - i, j, s, k)))
    candidates.append(perm(lambda i, j, s, k: (i, cols - 1 - j, s, k)))
    if rows == cols:
        candidates.append(perm(lambda i, j, s, k: (j, i, 1 - s, k)))
    return [g for g in candidates if not g.is_identity]


def template_generators(model: Model) -> List[Permutation]:
    template = model.template
    if template is None:
        raise ConfigurationError("Template mode needs a model carrying a grid or Chimera template tag")
    if template.kind == "grid":
        generators, expected = grid_generators(template.rows, template.cols), template.rows * template.cols
    else:
        generators, expected = chimera_generators(template.rows, template.cols), 8 * template.rows * template.cols
    if expected != model.num_variables:
        raise ConfigurationError(
            f"Template {template.kind} {template.rows}x{template.cols} implies {expected} variables, "
            f"model has {model.num_variables}"
        )
    return generators


class _Search:
    """Backtracking over color-respecting bijections with incremental potential checks."""

    def __init__(self, model: Model, colors: Sequence[int], node_budget: int):
        self.model = model
        self.colors = colors
        self.forms = PotentialForms(model)
        self.form_set = set(self.forms.forms)
        self.node_budget = node_budget
        self.nodes = 0
        self.order = self._base_order()
        self.position = {v: i for i, v in enumerate(self.order)}
        # potentials become checkable once their last scope variable (in base order) is mapped
        self.check_at: List[List[int]] = [[] for _ in self.order]
        for pid, pot in enumerate(model.potentials):
            if pot.scope:
                self.check_at[max(self.position[v] for v in pot.scope)].append(pid)
        self.by_color: Dict[int, List[int]] = {}
        for v in range(model.num_variables):
            self.by_color.setdefault(colors[v], []).append(v)

    def _base_order(self) -> List[int]:
        n = self.model.num_variables
        class_size = Counter(self.colors)
        neighbours: List[Set[int]] = [set() for _ in range(n)]
        for pot in self.model.potentials:
            for v in pot.scope:
                neighbours[v].update(pot.scope)
        order, seen = [], set()
        for start in sorted(range(n), key=lambda v: (class_size[self.colors[v]], v)):
            if start in seen:
                continue
            seen.add(start)
            queue = deque([start])
            while queue:
                v = queue.popleft()
                order.append(v)
                for w in sorted(neighbours[v] - seen):
                    seen.add(w)
                    queue.append(w)
        return order

    def _consistent(self, mapping: Dict[int, int], index: int) -> bool:
        for pid in self.check_at[index]:
            if self.forms.relabelled(pid, mapping.__getitem__) not in self.form_set:
                return False
        return True

    def find(self, level: int, target: int) -> Optional[Permutation]:
        """An automorphism fixing order[:level] pointwise and sending order[level] to target."""
        mapping = {v: v for v in self.order[:level]}
        mapping[self.order[level]] = target
        used = set(mapping.values())
        if not self._consistent(mapping, level):
            return None
        return self._extend(mapping, used, level + 1)

    def _extend(self, mapping: Dict[int, int], used: Set[int], index: int) -> Optional[Permutation]:
        self.nodes += 1
        if self.nodes > self.node_budget:
            raise SearchLimitError(f"Automorphism search exceeded {self.node_budget} nodes")
        if index == len(self.order):
            g = Permutation(tuple(mapping[v] for v in range(self.model.num_variables)))
            return g if self.forms.is_automorphism(g) else None
        v = self.order[index]
        candidates = [w for w in self.by_color[self.colors[v]] if w not in used]
        candidates.sort(key=lambda w: (w != v, w))
        for w in candidates:
            mapping[v] = w
            used.add(w)
            if self._consistent(mapping, index):
                found = self._extend(mapping, used, index + 1)
                if found is not None:
                    return found
            used.discard(w)
            del mapping[v]
        return None

    def strong_generators(self) -> List[Permutation]:
        generators: List[Permutation] = []
        for level in reversed(range(len(self.order))):
            base = self.order[level]
            orbit = _orbit(base, generators)
            for target in self.order[level + 1:]:
                if self.colors[target] != self.colors[base] or target in orbit:
                    continue
                g = self.find(level, target)
                if g is not None:
                    generators.append(g)
                    orbit = _orbit(base, generators)
        return generators


def _orbit(point: int, generators: Sequence[Permutation]) -> Set[int]:
    orbit, queue = {point}, deque([point])
    while queue:
        v = queue.popleft()
        for g in generators:
            w = g.image[v]
            if w not in orbit:
                orbit.add(w)
                queue.append(w)
    return orbit


def exact_automorphisms(
    model: Model,
    mode: Literal["template", "search"] = "search",
    max_variables: Optional[int] = None,
    node_budget: Optional[int] = None,
) -> PermutationGroup:
    """Generating set of exact automorphisms (identity when none survive)."""
    n = model.num_variables
    if mode == "template":
        forms = PotentialForms(model)
        generators = [g for g in template_generators(model) if forms.is_automorphism(g)]
        logger.info("Template %s: %d generator(s) validated", model.template.kind, len(generators))
    elif mode == "search":
        settings = get_settings()
        max_variables = settings.search_max_variables if max_variables is None else max_variables
        node_budget = settings.search_node_budget if node_budget is None else node_budget
        if n > max_variables:
            raise SearchLimitError(f"Search mode is limited to {max_variables} variables, model has {n}")
        colors = color_refinement(model).variable_colors
        search = _Search(model, colors, node_budget)
        generators = search.strong_generators()
        logger.info("Automorphism search found %d generator(s) in %d nodes", len(generators), search.nodes)
    else:
        raise ConfigurationError(f"Unknown automorphism mode '{mode}'")
    if not generators:
        return PermutationGroup.trivial(n)
    return PermutationGroup(tuple(generators))
