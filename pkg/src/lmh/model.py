"""
Discrete factor-graph models with log-space potentials.

A model is an unnormalized distribution over total assignments of its
variables: log pi(x) is the sum, over potentials, of the table entry selected
by x restricted to the potential's scope. Tables are row-major in scope order
with the last scope variable fastest.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Iterable, Iterator, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from scipy.special import logsumexp

from .app.dependencies import get_settings
from .errors import InvalidModelError, InvalidStateError, StateSpaceTooLargeError
from .estimation.tables import MarginalTable

logger = logging.getLogger(__name__)

State = List[int]
Changes = Union[Mapping[int, int], Iterable[Tuple[int, int]]]

_BLOCK_SIZE = 1 << 16


class Variable(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0)
    cardinality: int = Field(..., ge=2)
    name: Optional[str] = None


class Potential(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0)
    scope: Tuple[int, ...]
    log_table: Tuple[float, ...]


class SymmetryTemplate(BaseModel):
    """Geometry tag attached by the generators; drives template automorphisms."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["grid", "chimera"]
    rows: int = Field(..., ge=1)  # lattice rows, or Chimera cell rows
    cols: int = Field(..., ge=1)


class Model(BaseModel):
    """Immutable factor graph. Safe to share across concurrent chains."""

    model_config = ConfigDict(frozen=True)

    variables: Tuple[Variable, ...]
    potentials: Tuple[Potential, ...]
    template: Optional[SymmetryTemplate] = None

    _cards: Tuple[int, ...] = PrivateAttr()
    _scopes: Tuple[Tuple[int, ...], ...] = PrivateAttr()
    _strides: Tuple[Tuple[int, ...], ...] = PrivateAttr()
    _tables: Tuple[Tuple[float, ...], ...] = PrivateAttr()
    _var_to_potentials: Tuple[Tuple[int, ...], ...] = PrivateAttr()
    # per variable: (potential id, stride of the variable inside that potential)
    _incidence: Tuple[Tuple[Tuple[int, int], ...], ...] = PrivateAttr()

    def _check_structure(self) -> None:
        n = len(self.variables)
        for index, var in enumerate(self.variables):
            if var.id != index:
                raise InvalidModelError(f"Variable ids must be contiguous 0..n-1, got id {var.id} at position {index}")
        for index, pot in enumerate(self.potentials):
            if pot.id != index:
                raise InvalidModelError(f"Potential ids must be contiguous 0..m-1, got id {pot.id} at position {index}")
            if len(set(pot.scope)) != len(pot.scope):
                raise InvalidModelError(f"Potential {pot.id} has repeated variables in scope {pot.scope}")
            expected = 1
            for v in pot.scope:
                if not 0 <= v < n:
                    raise InvalidModelError(f"Potential {pot.id} references unknown variable {v}")
                expected *= self.variables[v].cardinality
            if len(pot.log_table) != expected:
                raise InvalidModelError(
                    f"Potential {pot.id} table has {len(pot.log_table)} entries, expected {expected}"
                )
            if not all(math.isfinite(w) for w in pot.log_table):
                raise InvalidModelError(f"Potential {pot.id} has non-finite log-weights (hard zeros are not supported)")

    def model_post_init(self, __context) -> None:
        self._check_structure()
        cards = tuple(v.cardinality for v in self.variables)
        scopes = tuple(p.scope for p in self.potentials)
        strides = []
        for scope in scopes:
            s, acc = [], 1
            for v in reversed(scope):
                s.append(acc)
                acc *= cards[v]
            strides.append(tuple(reversed(s)))
        incident: List[List[int]] = [[] for _ in cards]
        incidence: List[List[Tuple[int, int]]] = [[] for _ in cards]
        for pid, scope in enumerate(scopes):
            for v, stride in zip(scope, strides[pid]):
                incident[v].append(pid)
                incidence[v].append((pid, stride))
        self._cards = cards
        self._scopes = scopes
        self._strides = tuple(strides)
        self._tables = tuple(tuple(float(w) for w in p.log_table) for p in self.potentials)
        self._var_to_potentials = tuple(tuple(ids) for ids in incident)
        self._incidence = tuple(tuple(pairs) for pairs in incidence)

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return self._cards

    @property
    def var_to_potentials(self) -> Tuple[Tuple[int, ...], ...]:
        return self._var_to_potentials

    def state_space_size(self) -> int:
        return math.prod(self._cards)

    # Hot-path helpers; callers are responsible for state validity.

    def entry(self, pid: int, state: Sequence[int]) -> float:
        index = 0
        for v, stride in zip(self._scopes[pid], self._strides[pid]):
            index += state[v] * stride
        return self._tables[pid][index]

    def sum_entries(self, state: Sequence[int], potential_ids: Iterable[int]) -> float:
        scopes, strides, tables = self._scopes, self._strides, self._tables
        total = 0.0
        for pid in potential_ids:
            index = 0
            for v, stride in zip(scopes[pid], strides[pid]):
                index += state[v] * stride
            total += tables[pid][index]
        return total

    def conditional_logits(self, state: Sequence[int], var: int) -> List[float]:
        card = self._cards[var]
        logits = [0.0] * card
        scopes, strides, tables = self._scopes, self._strides, self._tables
        for pid, own_stride in self._incidence[var]:
            base = 0
            for v, stride in zip(scopes[pid], strides[pid]):
                if v != var:
                    base += state[v] * stride
            table = tables[pid]
            for value in range(card):
                logits[value] += table[base + value * own_stride]
        return logits


def validate_state(model: Model, state: Sequence[int]) -> None:
    if len(state) != model.num_variables:
        raise InvalidStateError(f"State has {len(state)} values, model has {model.num_variables} variables")
    for v, (value, card) in enumerate(zip(state, model.cardinalities)):
        if not 0 <= value < card:
            raise InvalidStateError(f"Value {value} out of range for variable {v} with cardinality {card}")


def _normalize_changes(model: Model, changes: Changes) -> Dict[int, int]:
    pairs = list(changes.items()) if isinstance(changes, Mapping) else list(changes)
    normalized: Dict[int, int] = {}
    for var, value in pairs:
        if not 0 <= var < model.num_variables:
            raise InvalidStateError(f"Change references unknown variable {var}")
        if var in normalized:
            raise InvalidStateError(f"Variable {var} changed twice in one change set")
        if not 0 <= value < model.cardinalities[var]:
            raise InvalidStateError(f"Value {value} out of range for variable {var}")
        normalized[var] = value
    return normalized


def log_score(model: Model, state: Sequence[int]) -> float:
    """Unnormalized log-probability of a total assignment."""
    validate_state(model, state)
    return model.sum_entries(state, range(len(model.potentials)))


def partial_log_score(model: Model, state: Sequence[int], potential_ids: Iterable[int]) -> float:
    validate_state(model, state)
    return model.sum_entries(state, potential_ids)


def delta_log_score(model: Model, state: Sequence[int], changes: Changes) -> float:
    """log_score(state with changes) - log_score(state), touching only incident potentials."""
    validate_state(model, state)
    normalized = _normalize_changes(model, changes)
    if not normalized:
        return 0.0
    affected = sorted({pid for v in normalized for pid in model.var_to_potentials[v]})
    after = list(state)
    for var, value in normalized.items():
        after[var] = value
    return model.sum_entries(after, affected) - model.sum_entries(state, affected)


def conditional_distribution(model: Model, state: Sequence[int], var: int) -> np.ndarray:
    """Distribution of `var` given all other variables of `state`."""
    if not 0 <= var < model.num_variables:
        raise InvalidStateError(f"Unknown variable {var}")
    validate_state(model, state)
    logits = np.asarray(model.conditional_logits(state, var))
    return np.exp(logits - logsumexp(logits))


def random_state(model: Model, rng: np.random.Generator) -> State:
    return [int(rng.integers(card)) for card in model.cardinalities]


def _check_cap(model: Model, max_states: Optional[int]) -> int:
    cap = get_settings().max_enumeration_states if max_states is None else max_states
    size = model.state_space_size()
    if size > cap:
        raise StateSpaceTooLargeError(f"State space has {size} states, enumeration cap is {cap}")
    return size


def _state_blocks(cards: Tuple[int, ...], size: int, block: int = _BLOCK_SIZE) -> Iterator[np.ndarray]:
    """Yield (k, n) digit arrays covering indices 0..size-1 in row-major order."""
    for start in range(0, size, block):
        indices = np.arange(start, min(start + block, size))
        if cards:
            yield np.stack(np.unravel_index(indices, cards), axis=1)
        else:
            yield np.zeros((len(indices), 0), dtype=np.int64)


def _block_log_weights(model: Model, digits: np.ndarray) -> np.ndarray:
    total = np.zeros(len(digits))
    cards = model.cardinalities
    for pot in model.potentials:
        table = np.asarray(pot.log_table)
        if not pot.scope:
            total += table[0]
            continue
        columns = tuple(digits[:, v] for v in pot.scope)
        total += table[np.ravel_multi_index(columns, tuple(cards[v] for v in pot.scope))]
    return total


def enumerate_states(model: Model, max_states: Optional[int] = None) -> np.ndarray:
    """All states as rows of a (S, n) array, row-major, last variable fastest."""
    size = _check_cap(model, max_states)
    return np.concatenate(list(_state_blocks(model.cardinalities, size)), axis=0)


def state_index(model: Model, state: Sequence[int]) -> int:
    index = 0
    for value, card in zip(state, model.cardinalities):
        index = index * card + value
    return index


def enumerate_log_weights(model: Model, max_states: Optional[int] = None) -> np.ndarray:
    size = _check_cap(model, max_states)
    return np.concatenate([_block_log_weights(model, d) for d in _state_blocks(model.cardinalities, size)])


def exact_joint(model: Model, max_states: Optional[int] = None) -> np.ndarray:
    """Normalized pi over all states in enumeration order."""
    log_w = enumerate_log_weights(model, max_states)
    return np.exp(log_w - logsumexp(log_w))


def enumerate_exact_marginals(model: Model, max_states: Optional[int] = None) -> MarginalTable:
    """Single-variable marginals of the normalized model by full enumeration."""
    size = _check_cap(model, max_states)
    cards = model.cardinalities
    log_mass = [np.full(card, -np.inf) for card in cards]
    for digits in _state_blocks(cards, size):
        log_w = _block_log_weights(model, digits)
        for v, card in enumerate(cards):
            column = digits[:, v]
            for value in range(card):
                mask = column == value
                if mask.any():
                    log_mass[v][value] = np.logaddexp(log_mass[v][value], logsumexp(log_w[mask]))
    logger.debug("Enumerated %d states for exact marginals", size)
    return MarginalTable(
        probabilities=tuple(np.exp(m - logsumexp(m)) for m in log_mass),
        provenance={"source": "enumeration", "states": size},
    )
