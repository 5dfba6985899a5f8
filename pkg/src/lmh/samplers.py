"""
Markov chain kernels and the chain runner.

Kernels are chain-private: they own their rng and any element sampler, mutate
the chain state in place and return the (variable, old value) pairs they
changed. `KernelConfig` is the immutable, shareable description they are built
from.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .app.dependencies import get_settings
from .errors import ConfigurationError, DegreeMismatchError, ScheduleError
from .estimation.tables import MarginalTable, avg_kl
from .group import ElementSampler, PermutationGroup, enumerate_elements, moved_sets
from .model import Model, State, enumerate_log_weights, enumerate_states, log_score, random_state, validate_state

logger = logging.getLogger(__name__)

Changes = List[Tuple[int, int]]
Hook = Callable[[int, Sequence[int]], None]

DEFAULT_ALPHA = 0.8


class KernelKind(str, Enum):
    """Markov transition rules."""
    GIBBS = "gibbs"
    ORBITAL = "orbital"
    MIXTURE = "mixture"


@dataclass(frozen=True)
class KernelConfig:
    kind: KernelKind
    group: Optional[PermutationGroup] = None
    alpha: float = DEFAULT_ALPHA
    orbitals: Tuple[PermutationGroup, ...] = ()
    weights: Optional[Tuple[float, ...]] = None
    scan: Literal["random", "systematic"] = "random"

    def __post_init__(self):
        if self.kind is KernelKind.ORBITAL and self.group is None:
            raise ConfigurationError("An orbital kernel needs a permutation group")
        if self.kind is KernelKind.MIXTURE:
            if not 0.0 < self.alpha < 1.0:
                raise ConfigurationError(f"Mixing parameter alpha must lie strictly inside (0, 1), got {self.alpha}")
            if self.weights is not None:
                if len(self.weights) != len(self.orbitals):
                    raise ConfigurationError("One selection weight per orbital kernel is required")
                if any(w < 0 for w in self.weights) or (self.orbitals and sum(self.weights) <= 0):
                    raise ConfigurationError("Selection weights must be non-negative with a positive sum")
        if self.scan not in ("random", "systematic"):
            raise ConfigurationError(f"Unknown Gibbs scan order '{self.scan}'")

    @classmethod
    def gibbs(cls, scan: Literal["random", "systematic"] = "random") -> "KernelConfig":
        return cls(KernelKind.GIBBS, scan=scan)

    @classmethod
    def orbital(cls, group: PermutationGroup) -> "KernelConfig":
        return cls(KernelKind.ORBITAL, group=group)

    @classmethod
    def mixture(
        cls,
        orbitals: Sequence[PermutationGroup],
        alpha: float = DEFAULT_ALPHA,
        weights: Optional[Sequence[float]] = None,
    ) -> "KernelConfig":
        return cls(
            KernelKind.MIXTURE,
            alpha=alpha,
            orbitals=tuple(orbitals),
            weights=None if weights is None else tuple(weights),
        )

    def groups(self) -> Tuple[PermutationGroup, ...]:
        if self.kind is KernelKind.ORBITAL:
            return (self.group,)
        return self.orbitals

    def selection_weights(self) -> Tuple[float, ...]:
        """Normalized orbital selection weights; default proportional to moved-variable counts."""
        if not self.orbitals:
            return ()
        raw = self.weights or tuple(float(len(g.moved_variables)) for g in self.orbitals)
        total = sum(raw)
        if total <= 0:
            return tuple(1.0 / len(self.orbitals) for _ in self.orbitals)
        return tuple(w / total for w in raw)

    def check_model(self, model: Model) -> None:
        for g in self.groups():
            if g.degree != model.num_variables:
                raise DegreeMismatchError(f"Group degree {g.degree} does not match {model.num_variables} variables")
            g.check_model(model)


@dataclass
class ChainStats:
    steps: Dict[str, int] = field(default_factory=dict)
    seconds: Dict[str, float] = field(default_factory=dict)
    proposed: int = 0
    accepted: int = 0

    @property
    def acceptance_rate(self) -> Optional[float]:
        return self.accepted / self.proposed if self.proposed else None


def _sample_from_logits(logits: List[float], u: float) -> int:
    if len(logits) == 2:
        # P(value 1) = 1 / (1 + exp(l0 - l1))
        diff = logits[0] - logits[1]
        p1 = 1.0 / (1.0 + math.exp(diff)) if diff < 700 else 0.0
        return 1 if u < p1 else 0
    top = max(logits)
    weights = [math.exp(l - top) for l in logits]
    threshold = u * sum(weights)
    acc = 0.0
    for value, w in enumerate(weights):
        acc += w
        if threshold < acc:
            return value
    return len(weights) - 1


class GibbsKernel:
    """Resample one variable from its conditional; random scan by default."""

    def __init__(self, model: Model, rng: np.random.Generator, scan: str = "random", name: str = "gibbs"):
        self.model = model
        self.rng = rng
        self.scan = scan
        self.name = name
        self.steps = 0
        self.seconds = 0.0
        self.last = self
        self._next = 0

    def leaves(self) -> List["GibbsKernel"]:
        return [self]

    def step(self, state: State) -> Changes:
        self.steps += 1
        n = self.model.num_variables
        if n == 0:
            return []
        if self.scan == "systematic":
            var = self._next
            self._next = (var + 1) % n
        else:
            var = int(self.rng.random() * n)
        logits = self.model.conditional_logits(state, var)
        value = _sample_from_logits(logits, self.rng.random())
        old = state[var]
        if value == old:
            return []
        state[var] = value
        return [(var, old)]


class OrbitalKernel:
    """Propose x^g for a random group element g, accept with min(1, pi(y)/pi(x)).

    Only the moved potentials are re-evaluated.
    """

    def __init__(
        self,
        model: Model,
        group: PermutationGroup,
        rng: np.random.Generator,
        name: str = "orbital",
        debug_full_eval: Optional[bool] = None,
    ):
        group.check_model(model)
        moved_vars, moved_pots = moved_sets(group, model)
        self.model = model
        self.group = group
        self.rng = rng
        self.name = name
        self.moved_variables = tuple(sorted(moved_vars))
        self.moved_potentials = tuple(sorted(moved_pots))
        self.sampler = ElementSampler(group, rng)
        self.debug_full_eval = get_settings().debug_full_eval if debug_full_eval is None else debug_full_eval
        self.steps = 0
        self.seconds = 0.0
        self.proposed = 0
        self.accepted = 0
        self.last = self

    def leaves(self) -> List["OrbitalKernel"]:
        return [self]

    def step(self, state: State) -> Changes:
        self.steps += 1
        self.proposed += 1
        image = self.sampler.draw().image
        targets = {image[v]: state[v] for v in self.moved_variables}
        changes = [(w, state[w]) for w, value in targets.items() if state[w] != value]
        if not changes:
            self.accepted += 1
            return []
        before_full = log_score(self.model, state) if self.debug_full_eval else 0.0
        before = self.model.sum_entries(state, self.moved_potentials)
        for w, _ in changes:
            state[w] = targets[w]
        delta = self.model.sum_entries(state, self.moved_potentials) - before
        if self.debug_full_eval:
            full = log_score(self.model, state) - before_full
            if abs(full - delta) > 1e-9:
                raise AssertionError(f"Moved-potential delta {delta} disagrees with full re-evaluation {full}")
        if delta >= 0.0 or self.rng.random() < math.exp(delta):
            self.accepted += 1
            return changes
        for w, old in changes:
            state[w] = old
        return []


class MixtureKernel:
    """Base kernel with probability alpha, otherwise one orbital kernel picked by weight."""

    def __init__(
        self,
        base: GibbsKernel,
        orbitals: Sequence[OrbitalKernel],
        alpha: float,
        weights: Sequence[float],
        rng: np.random.Generator,
    ):
        self.base = base
        self.orbitals = list(orbitals)
        self.alpha = alpha
        self.rng = rng
        self.name = "mixture"
        self._cumulative = np.cumsum(weights).tolist() if self.orbitals else []
        self.last = base

    def leaves(self) -> List:
        return [self.base, *self.orbitals]

    def step(self, state: State) -> Changes:
        u = self.rng.random()
        if not self.orbitals or u < self.alpha:
            kernel = self.base
        else:
            # reuse u: conditioned on u >= alpha it is uniform on [alpha, 1)
            r = (u - self.alpha) / (1.0 - self.alpha) * self._cumulative[-1]
            index = 0
            while index < len(self._cumulative) - 1 and r >= self._cumulative[index]:
                index += 1
            kernel = self.orbitals[index]
        self.last = kernel
        return kernel.step(state)


def build_kernel(config: KernelConfig, model: Model, rng: np.random.Generator):
    config.check_model(model)
    if config.kind is KernelKind.GIBBS:
        return GibbsKernel(model, rng, scan=config.scan)
    if config.kind is KernelKind.ORBITAL:
        return OrbitalKernel(model, config.group, rng)
    orbitals = [OrbitalKernel(model, g, rng, name=f"orbital-{i}") for i, g in enumerate(config.orbitals)]
    base = GibbsKernel(model, rng, scan=config.scan)
    return MixtureKernel(base, orbitals, config.alpha, config.selection_weights(), rng)


def gibbs_step(model: Model, state: Sequence[int], rng: np.random.Generator) -> State:
    validate_state(model, state)
    new_state = list(state)
    GibbsKernel(model, rng).step(new_state)
    return new_state


def orbital_metropolis_step(
    model: Model, group: PermutationGroup, state: Sequence[int], rng: np.random.Generator
) -> Tuple[State, bool]:
    validate_state(model, state)
    kernel = OrbitalKernel(model, group, rng)
    new_state = list(state)
    kernel.step(new_state)
    return new_state, kernel.accepted == 1


def mixture_step(config: KernelConfig, model: Model, state: Sequence[int], rng: np.random.Generator) -> State:
    if config.kind is not KernelKind.MIXTURE:
        raise ConfigurationError("mixture_step needs a mixture kernel configuration")
    validate_state(model, state)
    new_state = list(state)
    build_kernel(config, model, rng).step(new_state)
    return new_state


# Chain runner


@dataclass(frozen=True)
class TraceRow:
    chain_id: int
    kernel: str
    iteration: int
    wallclock_ms: float
    avg_kl: Optional[float]
    acceptance_rate: Optional[float]

    HEADER = ("chain_id", "kernel", "iteration", "wallclock_ms", "avg_kl", "acceptance_rate")

    def as_row(self) -> Tuple:
        return (
            self.chain_id,
            self.kernel,
            self.iteration,
            f"{self.wallclock_ms:.3f}",
            "" if self.avg_kl is None else repr(self.avg_kl),
            "" if self.acceptance_rate is None else repr(self.acceptance_rate),
        )


@dataclass
class ChainResult:
    marginals: MarginalTable
    stats: ChainStats
    trace: List[TraceRow]
    final_state: State


def geometric_checkpoints(iterations: int, start: int = 100, ratio: float = 1.5) -> List[int]:
    """floor(start * ratio^k) up to `iterations`, plus `iterations` itself."""
    points, value = [], float(start)
    while int(value) < iterations:
        if not points or int(value) != points[-1]:
            points.append(int(value))
        value *= ratio
    points.append(iterations)
    return points


class _HoldingCounts:
    """Marginal counts from holding times, so each iteration costs O(#changes)."""

    def __init__(self, state: Sequence[int], cardinalities: Sequence[int], burn_in: int, thinning: int):
        self.burn_in = burn_in
        self.thinning = thinning
        self.counts = [[0] * card for card in cardinalities]
        self.since = [1] * len(state)
        self.values = list(state)

    def retained_upto(self, t: int) -> int:
        return (t - self.burn_in) // self.thinning if t >= self.burn_in else 0

    def change(self, var: int, old: int, new: int, t: int) -> None:
        self.counts[var][old] += self.retained_upto(t - 1) - self.retained_upto(self.since[var] - 1)
        self.since[var] = t
        self.values[var] = new

    def snapshot(self, t: int, **provenance) -> MarginalTable:
        total = self.retained_upto(t)
        counts = [list(c) for c in self.counts]
        for var, value in enumerate(self.values):
            counts[var][value] += total - self.retained_upto(self.since[var] - 1)
        return MarginalTable.from_counts(counts, total, **provenance)


def run_chain(
    model: Model,
    config: KernelConfig,
    seed: int,
    iterations: int,
    burn_in: int = 0,
    thinning: int = 1,
    truth: Optional[MarginalTable] = None,
    checkpoints: Optional[Sequence[int]] = None,
    hooks: Sequence[Hook] = (),
    chain_id: int = 0,
    label: Optional[str] = None,
    initial_state: Optional[Sequence[int]] = None,
    epsilon: Optional[float] = None,
) -> ChainResult:
    """Run one chain; deterministic given `seed` (wall-clock column aside)."""
    if iterations <= 0 or burn_in < 0 or iterations <= burn_in:
        raise ScheduleError(f"Need iterations > burn_in >= 0, got iterations={iterations}, burn_in={burn_in}")
    if thinning < 1:
        raise ScheduleError(f"Thinning must be >= 1, got {thinning}")
    rng = np.random.default_rng(seed)
    if initial_state is None:
        state = random_state(model, rng)
    else:
        validate_state(model, initial_state)
        state = list(initial_state)
    kernel = build_kernel(config, model, rng)
    label = label or config.kind.value
    checkpoints = sorted(set(geometric_checkpoints(iterations) if checkpoints is None else checkpoints))
    counts = _HoldingCounts(state, model.cardinalities, burn_in, thinning)
    leaves = kernel.leaves()
    orbital_leaves = [k for k in leaves if isinstance(k, OrbitalKernel)]
    trace: List[TraceRow] = []
    elapsed = 0.0
    next_checkpoint = 0
    clock = time.perf_counter

    for t in range(1, iterations + 1):
        start = clock()
        changes = kernel.step(state)
        spent = clock() - start
        elapsed += spent
        kernel.last.seconds += spent
        for var, old in changes:
            counts.change(var, old, state[var], t)
        if hooks and t > burn_in and (t - burn_in) % thinning == 0:
            for hook in hooks:
                hook(t, state)
        while next_checkpoint < len(checkpoints) and checkpoints[next_checkpoint] <= t:
            if checkpoints[next_checkpoint] == t and counts.retained_upto(t) > 0:
                proposed = sum(k.proposed for k in orbital_leaves)
                accepted = sum(k.accepted for k in orbital_leaves)
                kl = None
                if truth is not None:
                    kl = avg_kl(truth, counts.snapshot(t), epsilon).average
                trace.append(
                    TraceRow(
                        chain_id=chain_id,
                        kernel=label,
                        iteration=t,
                        wallclock_ms=elapsed * 1000.0,
                        avg_kl=kl,
                        acceptance_rate=accepted / proposed if proposed else None,
                    )
                )
            next_checkpoint += 1

    stats = ChainStats(
        steps={k.name: k.steps for k in leaves},
        seconds={k.name: k.seconds for k in leaves},
        proposed=sum(k.proposed for k in orbital_leaves),
        accepted=sum(k.accepted for k in orbital_leaves),
    )
    marginals = counts.snapshot(iterations, source="chain", seed=seed, kernel=label)
    logger.debug(
        "Chain %d (%s) finished %d iterations in %.2fs, acceptance %s",
        chain_id, label, iterations, elapsed, stats.acceptance_rate,
    )
    return ChainResult(marginals=marginals, stats=stats, trace=trace, final_state=state)


# Exact transition matrices for enumerable models


def gibbs_transition_matrix(model: Model, max_states: Optional[int] = None) -> sparse.csr_matrix:
    """Random-scan Gibbs kernel as a sparse S x S matrix in enumeration order."""
    cards = model.cardinalities
    size = model.state_space_size()
    log_w = enumerate_log_weights(model, max_states)
    if not cards:
        return sparse.csr_matrix(np.ones((1, 1)))
    log_w = log_w.reshape(cards)
    index = np.arange(size).reshape(cards)
    n = len(cards)
    rows, cols, data = [], [], []
    for v, card in enumerate(cards):
        cond = np.exp(log_w - logsumexp(log_w, axis=v, keepdims=True))
        for value in range(card):
            target = np.broadcast_to(np.take(index, [value], axis=v), cards)
            prob = np.broadcast_to(np.take(cond, [value], axis=v), cards)
            rows.append(index.ravel())
            cols.append(target.ravel())
            data.append(prob.ravel() / n)
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return matrix.tocsr()


def orbital_transition_matrix(
    model: Model, group: PermutationGroup, max_states: Optional[int] = None, max_order: int = 100_000
) -> sparse.csr_matrix:
    """Orbital Metropolis kernel with the proposal uniform over all enumerated group elements."""
    group.check_model(model)
    states = enumerate_states(model, max_states)
    log_w = enumerate_log_weights(model, max_states)
    size = len(states)
    cards = model.cardinalities
    elements = enumerate_elements(group, max_order)
    source = np.arange(size)
    rows, cols, data = [], [], []
    for g in elements:
        if cards:
            moved = np.empty_like(states)
            moved[:, list(g.image)] = states
            target = np.ravel_multi_index(tuple(moved.T), cards)
        else:
            target = source
        accept = np.exp(np.minimum(0.0, log_w[target] - log_w))
        rows += [source, source]
        cols += [target, source]
        data += [accept / len(elements), (1.0 - accept) / len(elements)]
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return matrix.tocsr()


def transition_matrix(model: Model, config: KernelConfig, max_states: Optional[int] = None) -> sparse.csr_matrix:
    """Exact kernel matrix for any configuration (random-scan Gibbs base)."""
    if config.kind is KernelKind.GIBBS:
        return gibbs_transition_matrix(model, max_states)
    if config.kind is KernelKind.ORBITAL:
        return orbital_transition_matrix(model, config.group, max_states)
    return mixture_transition_matrix(model, config, max_states)


def mixture_transition_matrix(model: Model, config: KernelConfig, max_states: Optional[int] = None) -> sparse.csr_matrix:
    base = gibbs_transition_matrix(model, max_states)
    if not config.orbitals:
        return base
    matrix = config.alpha * base
    for weight, group in zip(config.selection_weights(), config.orbitals):
        matrix = matrix + (1.0 - config.alpha) * weight * orbital_transition_matrix(model, group, max_states)
    return matrix.tocsr()
