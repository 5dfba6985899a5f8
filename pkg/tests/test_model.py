import itertools
import math

import numpy as np
import pytest

from conftest import brute_force_marginals, make_model, random_model
from lmh.errors import InvalidStateError, StateSpaceTooLargeError
from lmh.generators.ising import IsingSpec, ising_grid
from lmh.model import (
    Model,
    conditional_distribution,
    delta_log_score,
    enumerate_exact_marginals,
    enumerate_log_weights,
    enumerate_states,
    exact_joint,
    log_score,
    state_index,
)


def score_table(model: Model) -> dict:
    """Independent score oracle: sum of table lookups computed per potential."""
    table = {}
    cards = model.cardinalities
    for state in itertools.product(*(range(c) for c in cards)):
        total = 0.0
        for pot in model.potentials:
            index = 0
            for v in pot.scope:
                index = index * cards[v] + state[v]
            total += pot.log_table[index]
        table[state] = total
    return table


def test_log_score_single_unary():
    model = make_model([2], [((0,), (0.0, 0.7))])
    assert log_score(model, [1]) == pytest.approx(0.7)


def test_log_score_ising_all_equal():
    model = ising_grid(IsingSpec(rows=2, cols=2, J=0.5))
    assert log_score(model, [0, 0, 0, 0]) == pytest.approx(2.0)


def test_log_score_matches_materialized_table():
    model = random_model(5, seed=11)
    table = score_table(model)
    rng = np.random.default_rng(0)
    for _ in range(20):
        state = tuple(int(x) for x in rng.integers(2, size=5))
        assert log_score(model, state) == pytest.approx(table[state], abs=1e-12)


def test_log_score_rejects_out_of_range_values():
    model = make_model([2, 3], [((0, 1), (0.0,) * 6)])
    with pytest.raises(InvalidStateError):
        log_score(model, [0, 3])
    with pytest.raises(InvalidStateError):
        log_score(model, [0])


def test_delta_log_score_empty_change_set():
    model = random_model(4, seed=1)
    assert delta_log_score(model, [0, 1, 0, 1], {}) == 0.0


def test_delta_log_score_single_corner_flip():
    model = ising_grid(IsingSpec(rows=2, cols=2, J=0.5))
    assert delta_log_score(model, [0, 0, 0, 0], {0: 1}) == pytest.approx(-2.0)


def test_delta_log_score_matches_full_re_evaluation():
    model = random_model(6, seed=3, cards=[2, 3, 2, 2, 3, 2], pairwise=8)
    rng = np.random.default_rng(4)
    for _ in range(50):
        state = [int(rng.integers(c)) for c in model.cardinalities]
        variables = rng.choice(6, size=int(rng.integers(1, 4)), replace=False)
        changes = {int(v): int(rng.integers(model.cardinalities[v])) for v in variables}
        after = list(state)
        for v, value in changes.items():
            after[v] = value
        expected = log_score(model, after) - log_score(model, state)
        assert delta_log_score(model, state, changes) == pytest.approx(expected, abs=1e-12)


def test_delta_log_score_rejects_duplicate_changes():
    model = random_model(3, seed=2)
    with pytest.raises(InvalidStateError):
        delta_log_score(model, [0, 0, 0], [(1, 1), (1, 0)])


def test_conditional_distribution_without_potentials_is_uniform():
    model = make_model([3, 2], [((1,), (0.0, 1.0))])
    np.testing.assert_allclose(conditional_distribution(model, [2, 0], 0), [1 / 3] * 3)


def test_conditional_distribution_unary():
    model = make_model([2], [((0,), (0.0, math.log(2)))])
    np.testing.assert_allclose(conditional_distribution(model, [0], 0), [1 / 3, 2 / 3])


def test_conditional_distribution_matches_joint():
    rng = np.random.default_rng(8)
    model = make_model(
        [2, 3, 2],
        [((0, 1), rng.normal(size=6).tolist()), ((1, 2), rng.normal(size=6).tolist()), ((1,), (0.1, 0.2, 0.3))],
    )
    joint = exact_joint(model).reshape(2, 3, 2)
    for x0, x2 in itertools.product(range(2), range(2)):
        expected = joint[x0, :, x2] / joint[x0, :, x2].sum()
        np.testing.assert_allclose(conditional_distribution(model, [x0, 0, x2], 1), expected, atol=1e-12)


def test_model_rejects_bad_table_length():
    with pytest.raises(ValueError, match="expected 4"):
        make_model([2, 2], [((0, 1), (0.0, 0.0, 0.0))])


def test_model_rejects_non_finite_weights():
    with pytest.raises(ValueError, match="non-finite"):
        make_model([2], [((0,), (0.0, float("-inf")))])


def test_model_rejects_repeated_scope_variable():
    with pytest.raises(ValueError, match="repeated"):
        make_model([2], [((0, 0), (0.0,) * 4)])


def test_enumerate_states_is_row_major():
    model = make_model([2, 3], [])
    states = enumerate_states(model)
    assert states.shape == (6, 2)
    for index, state in enumerate(states):
        assert state_index(model, state) == index


def test_enumerate_log_weights_match_log_score():
    model = random_model(5, seed=9)
    log_w = enumerate_log_weights(model)
    for state, w in zip(enumerate_states(model), log_w):
        assert w == pytest.approx(log_score(model, state), abs=1e-12)


def test_exact_marginals_unary():
    model = make_model([2], [((0,), (0.0, math.log(2)))])
    marginals = enumerate_exact_marginals(model)
    assert marginals.probabilities[0][1] == pytest.approx(2 / 3)
    assert marginals.provenance["source"] == "enumeration"


def test_exact_marginals_of_independent_variables_factorize():
    model = make_model([2, 2], [((0,), (0.0, 0.5)), ((1,), (0.0, -1.0))])
    marginals = enumerate_exact_marginals(model)
    p0 = math.exp(0.5) / (1 + math.exp(0.5))
    p1 = math.exp(-1.0) / (1 + math.exp(-1.0))
    assert marginals.probabilities[0][1] == pytest.approx(p0)
    assert marginals.probabilities[1][1] == pytest.approx(p1)


def test_exact_marginals_zero_field_ising_are_uniform():
    marginals = enumerate_exact_marginals(ising_grid(IsingSpec(rows=2, cols=2, J=0.5)))
    for p in marginals.probabilities:
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-12)


def test_exact_marginals_match_brute_force(zoo_model):
    marginals = enumerate_exact_marginals(zoo_model)
    for p, q in zip(marginals.probabilities, brute_force_marginals(zoo_model)):
        np.testing.assert_allclose(p, q, atol=1e-12)


def test_exact_marginals_invariant_under_constant_shift():
    model = make_model([2, 2], [((0, 1), (0.1, 0.4, -0.2, 0.3))])
    shifted = make_model([2, 2], [((0, 1), (5.1, 5.4, 4.8, 5.3))])
    a, b = enumerate_exact_marginals(model), enumerate_exact_marginals(shifted)
    assert a.max_abs_error(b) < 1e-12


def test_enumeration_cap():
    model = make_model([2] * 10, [])
    with pytest.raises(StateSpaceTooLargeError):
        enumerate_exact_marginals(model, max_states=512)


def test_enumeration_cap_from_settings(monkeypatch):
    from lmh.app.dependencies import get_settings

    monkeypatch.setenv("LMH_MAX_ENUMERATION_STATES", "8")
    get_settings.cache_clear()
    with pytest.raises(StateSpaceTooLargeError):
        exact_joint(make_model([2] * 4, []))


def test_model_json_round_trip_is_exact():
    model = ising_grid(IsingSpec(rows=3, cols=2, J=0.3, field=0.1, field_noise=0.2, seed=4))
    restored = Model.model_validate_json(model.model_dump_json())
    assert restored == model
    assert restored.template == model.template
