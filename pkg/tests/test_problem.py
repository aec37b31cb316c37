import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmtab.problem import (
    InvalidTeamError,
    Team,
    aggregate_traits,
    denormalize,
    is_feasible_target,
    is_valid_assignment,
    normalize,
    trait_capacity,
)


def test_aggregate_traits_examples():
    team = Team([5, 5], [[1, 2], [3, 4]])
    np.testing.assert_array_equal(aggregate_traits([[1, 0], [0, 2]], team), [[1, 2], [6, 8]])
    np.testing.assert_array_equal(aggregate_traits(np.zeros((3, 2)), team), np.zeros((3, 2)))
    eye = Team([3, 3], np.eye(2))
    np.testing.assert_array_equal(aggregate_traits([[2, 1], [0, 3]], eye), [[2, 1], [0, 3]])


def test_aggregate_dimension_mismatch():
    team = Team([1, 1], np.eye(2))
    with pytest.raises(ValueError):
        aggregate_traits([[1, 0, 0]], team)


@pytest.mark.parametrize("counts,Q,expected", [
    ([1, 1], [[2, 0], [0, 4]], [2, 4]),
    ([3], [[1, 1]], [3, 3]),
    ([2, 5], [[1, 2], [3, 1]], [17, 9]),
])
def test_trait_capacity(counts, Q, expected):
    np.testing.assert_allclose(trait_capacity(Team(counts, Q)), expected)


@pytest.mark.parametrize("counts,Q", [
    ([1, 1], [[1, 0], [1, 0]]),       # second trait absent
    ([0, 0], [[1, 1], [1, 1]]),       # no robots
    ([1, -1], [[1, 1], [1, 1]]),      # negative count
    ([1, 1], [[1, -0.5], [1, 1]]),    # negative trait
    ([1.5, 1], [[1, 1], [1, 1]]),     # fractional count
])
def test_invalid_teams_rejected(counts, Q):
    with pytest.raises(InvalidTeamError):
        Team(counts, Q)


def test_zero_capacity_only_from_absent_species():
    # a species with zero robots cannot supply its trait
    with pytest.raises(InvalidTeamError):
        Team([1, 0], [[1, 0], [0, 1]])


def test_team_is_immutable():
    team = Team([1, 2], [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        team.traits[0, 0] = 5
    with pytest.raises(ValueError):
        team.counts[0] = 5


def test_normalize_examples():
    team = Team([1, 1], [[2, 0], [0, 4]])
    np.testing.assert_allclose(normalize([[1, 2]], team), [[0.5, 0.5]])
    Y = normalize([[2, 4], [0, 0]], team)
    np.testing.assert_allclose(Y, [[1, 1], [0, 0]])
    assert is_feasible_target(Y)


def test_normalize_round_trip(rng):
    team = Team([2, 5, 1], rng.random((3, 4)) + 0.1)
    Y = rng.random((3, 4)) * 10
    np.testing.assert_allclose(denormalize(normalize(Y, team), team), Y, rtol=0, atol=1e-12)


@pytest.mark.parametrize("Y,ok", [
    ([[0.5], [0.5]], True),
    ([[0.7], [0.5]], False),
    (np.zeros((3, 2)), True),
    ([[1.0 + 5e-10]], True),
    ([[1.0 + 1e-8]], False),
])
def test_is_feasible_target(Y, ok):
    assert is_feasible_target(Y) is ok


def test_serialization_round_trip():
    team = Team([2, 3], [[0.5, 1.0], [2.0, 0.25]], ("speed", "payload"))
    again = Team.from_dict(team.to_dict())
    assert again == team
    assert again.trait_names == ("speed", "payload")


teams = st.integers(1, 4).flatmap(lambda S: st.tuples(
    st.lists(st.integers(1, 6), min_size=S, max_size=S),
    st.lists(st.lists(st.floats(0.05, 5.0), min_size=3, max_size=3), min_size=S, max_size=S),
))


@st.composite
def team_and_assignments(draw):
    counts, Q = draw(teams)
    team = Team(counts, Q)
    M = draw(st.integers(1, 3))
    X1 = np.zeros((M, len(counts)), dtype=int)
    X2 = np.zeros_like(X1)
    for s, n in enumerate(counts):
        for m in range(M):
            X1[m, s] = draw(st.integers(0, n))
            X2[m, s] = draw(st.integers(0, n))
    return team, X1, X2


@settings(max_examples=60, deadline=None)
@given(team_and_assignments())
def test_aggregate_is_linear(data):
    team, X1, X2 = data
    np.testing.assert_allclose(aggregate_traits(X1 + X2, team),
                               aggregate_traits(X1, team) + aggregate_traits(X2, team))


@settings(max_examples=60, deadline=None)
@given(team_and_assignments())
def test_valid_assignments_give_feasible_targets(data):
    team, X, _ = data
    # squeeze X into the team's counts by greedy trimming
    X = X.copy()
    for s in range(team.n_species):
        while X[:, s].sum() > team.counts[s]:
            X[np.argmax(X[:, s]), s] -= 1
    assert is_valid_assignment(X, team)
    Y = normalize(aggregate_traits(X, team), team)
    assert is_feasible_target(Y)
    assert np.all((Y >= 0) & (Y <= 1 + 1e-12))
