import itertools
import math
import os
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pytest

from lmh.app.dependencies import get_settings
from lmh.generators.chimera import ChimeraSpec, chimera
from lmh.generators.ising import IsingSpec, binary_model, ising_grid
from lmh.generators.mln import load_program, mln_ground
from lmh.model import Model, Potential, Variable, log_score

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    """Each test sees default settings, unaffected by the developer's environment."""
    for key in list(os.environ):
        if key.startswith("LMH_"):
            monkeypatch.delenv(key, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def make_model(cards: Sequence[int], potentials: Sequence[tuple]) -> Model:
    """Model from cardinalities and (scope, log_table) pairs."""
    return Model(
        variables=[Variable(id=v, cardinality=c) for v, c in enumerate(cards)],
        potentials=[Potential(id=i, scope=tuple(s), log_table=tuple(t)) for i, (s, t) in enumerate(potentials)],
    )


def random_model(num_variables: int, seed: int, cards: Sequence[int] = None, pairwise: int = 6) -> Model:
    rng = np.random.default_rng(seed)
    cards = list(cards or [2] * num_variables)
    potentials = [((v,), rng.normal(size=cards[v]).tolist()) for v in range(num_variables)]
    pairs = list(itertools.combinations(range(num_variables), 2))
    for index in rng.choice(len(pairs), size=min(pairwise, len(pairs)), replace=False):
        a, b = pairs[int(index)]
        potentials.append(((a, b), rng.normal(size=cards[a] * cards[b]).tolist()))
    return make_model(cards, potentials)


def chain4(J: float = 0.5, fields=(0.1, 0.2, 0.3, 0.4)) -> Model:
    """X0 - X1 - X2 - X3 with edges (0,1), (1,2), (2,3) then four unaries."""
    return binary_model(4, [(0, 1), (1, 2), (2, 3)], [J, J, J], list(fields))


def toy4() -> Model:
    """Four binary variables, two asymmetric pairwise couplings and distinct unaries."""
    return make_model(
        [2, 2, 2, 2],
        [
            ((0, 2), (0.4, -0.2, 0.1, 0.3)),
            ((1, 3), (0.2, 0.0, -0.3, 0.5)),
            ((0,), (0.0, 0.3)),
            ((1,), (0.0, -0.2)),
            ((2,), (0.0, 0.6)),
            ((3,), (0.0, 0.1)),
        ],
    )


def mixed_model() -> Model:
    """Cardinalities (3, 2, 3) with a ternary potential."""
    rng = np.random.default_rng(5)
    return make_model(
        [3, 2, 3],
        [
            ((0, 1, 2), rng.normal(size=18).tolist()),
            ((2,), (0.0, 0.4, -0.1)),
            ((0, 2), rng.normal(size=9).tolist()),
        ],
    )


def cycle4(J: float = 0.7) -> Model:
    return binary_model(4, [(0, 1), (1, 2), (2, 3), (3, 0)], [J] * 4, [0.0] * 4)


def zoo() -> Dict[str, Model]:
    """Enumerable models (at most 12 binary variables) used across the suite."""
    return {
        "ising_2x2": ising_grid(IsingSpec(rows=2, cols=2, J=0.5, field=0.1)),
        "ising_3x3_zero_field": ising_grid(IsingSpec(rows=3, cols=3, J=0.4)),
        "chain4": chain4(),
        "toy4": toy4(),
        "mixed": mixed_model(),
        "chimera_1x1": chimera(ChimeraSpec(rows=1, cols=1, intra_coupling=0.3, inter_coupling=0.3)),
        "faculty_pages": mln_ground(load_program(DATA_DIR / "mln" / "faculty_pages.mln")).model,
    }


@pytest.fixture(params=sorted(zoo()))
def zoo_model(request) -> Model:
    return zoo()[request.param]


def brute_force_marginals(model: Model) -> List[np.ndarray]:
    """Marginals from an independent loop over every state."""
    marginals = [np.zeros(c) for c in model.cardinalities]
    total = 0.0
    for state in itertools.product(*(range(c) for c in model.cardinalities)):
        w = math.exp(log_score(model, state))
        total += w
        for v, value in enumerate(state):
            marginals[v][value] += w
    return [m / total for m in marginals]


def random_states(model: Model, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([rng.integers(c, size=count) for c in model.cardinalities], axis=1)
