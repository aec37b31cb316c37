import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmtab.gp import KernelConfig, TraitRewardModel
from cmtab.optimizer import (
    CandidateSet,
    CmtabConfig,
    ConfigurationError,
    beta,
    build_candidate_set,
    confidence_radius,
    empty_models,
    estimated_utility,
    point_utilities,
    project_columns,
    radius_scale,
    sample_neighborhood,
    sample_neighborhoods,
    select_target,
    step,
)
from cmtab.problem import Team, feasible_mask, is_feasible_target, is_valid_assignment


class FixedModel:
    """Stand-in posterior returning a chosen (mean, variance) per query."""

    def __init__(self, fn):
        self.fn = fn

    def predict_many(self, Ys):
        out = np.array([self.fn(y) for y in np.atleast_2d(Ys)], dtype=float)
        return out[:, 0], out[:, 1]


def cfg(**kw):
    return CmtabConfig(**kw)


# --- candidate set ---------------------------------------------------------

@pytest.mark.parametrize("M,U,d,n", [(1, 1, 3, 3), (2, 1, 2, 3), (2, 2, 2, 9),
                                     (3, 3, 2, 64), (3, 3, 3, 1000)])
def test_candidate_counts(M, U, d, n):
    s = build_candidate_set(None, M, cfg(grid_resolution=d), 400, U=U)
    assert len(s) == n
    assert feasible_mask(s.candidates).all()
    assert not s.counts.any()


def test_candidate_values_small():
    s = build_candidate_set(None, 1, cfg(grid_resolution=3), 100, U=1)
    assert s.candidates[:, 0, 0].tolist() == [0.0, 0.5, 1.0]
    s = build_candidate_set(None, 2, cfg(grid_resolution=2), 100, U=1)
    assert [c.ravel().tolist() for c in s.candidates] == [[0, 0], [0, 1], [1, 0]]


def test_candidate_order_is_lexicographic():
    s = build_candidate_set(None, 2, cfg(grid_resolution=3), 100, U=2)
    keys = [tuple((c * 2).round().astype(int).ravel()) for c in s.candidates]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


def test_candidate_set_needs_trait_count():
    with pytest.raises(ConfigurationError):
        build_candidate_set(None, 2, cfg(), 100)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        CmtabConfig(grid_resolution=1)
    with pytest.raises(ConfigurationError):
        CmtabConfig(neighborhood_size=0)
    with pytest.raises(ConfigurationError):
        CmtabConfig(beta=-1.0)


# --- confidence radius / beta ------------------------------------------------

def test_confidence_radius_values():
    assert confidence_radius(0, 400) == pytest.approx(3.4617, abs=1e-3)
    assert confidence_radius(7, 400) == pytest.approx(1.2239, abs=1e-3)
    assert confidence_radius(10**9, 400) < 1e-3
    r = confidence_radius(np.arange(20), 400)
    assert np.all(np.diff(r) < 0)


def test_radius_scale_half_cell():
    # fresh candidate neighborhood spans half a grid cell
    for d in (2, 3, 5):
        hw = confidence_radius(0, 400) * radius_scale(d, 400)
        assert hw == pytest.approx(0.5 / (d - 1))


def test_beta_schedule_and_override():
    c = cfg()
    assert beta(1, c, 100) == pytest.approx(math.sqrt(2 * math.log(100 * math.pi**2 / 0.6)))
    assert beta(1, c, 100) == pytest.approx(3.85, abs=5e-3)
    vals = [beta(i, c, 100) for i in range(1, 50)]
    assert all(b2 >= b1 for b1, b2 in zip(vals, vals[1:]))
    assert all(beta(i, cfg(beta=2.0), 100) == 2.0 for i in range(1, 10))
    with pytest.raises(ValueError):
        beta(0, c, 100)


# --- neighborhoods --------------------------------------------------------------

def test_neighborhood_radius_zero(rng):
    Y = np.array([[0.2, 0.4], [0.3, 0.1]])
    pts = sample_neighborhood(Y, 0.0, 6, rng)
    assert pts.shape == (6, 2, 2)
    assert np.all(pts == Y)


def test_neighborhood_interval(rng):
    pts = sample_neighborhood([[0.9]], 0.5, 500, rng)
    assert pts[0, 0, 0] == 0.9
    assert pts.min() >= 0.4 - 1e-12 and pts.max() <= 1.0
    assert feasible_mask(pts).all()


def test_neighborhood_projection_keeps_feasible(rng):
    # a boundary point: most perturbations violate the column budget
    Y = np.array([[0.5, 1.0], [0.5, 0.0]])
    pts = sample_neighborhood(Y, 0.4, 200, rng)
    assert feasible_mask(pts).all()
    assert np.all(np.abs(pts - Y) <= 0.4 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_neighborhoods_always_feasible(M, U, hw, seed):
    rng = np.random.default_rng(seed)
    Ys = project_columns(rng.uniform(0, 1, size=(4, M, U)))
    pts = sample_neighborhoods(Ys, np.full(4, hw), 5, rng)
    assert feasible_mask(pts.reshape(-1, M, U)).all()
    assert np.all(pts[:, 0] == Ys)
    assert np.all(np.abs(pts - Ys[:, None]) <= hw + 1e-12)


def test_project_columns():
    Y = np.array([[1.0, 0.2], [1.0, 0.3]])
    P = project_columns(Y)
    np.testing.assert_allclose(P, [[0.5, 0.2], [0.5, 0.3]])
    assert is_feasible_target(P)


# --- utilities -----------------------------------------------------------------

def test_utility_of_priors_is_M():
    models = empty_models(3, 2, KernelConfig())
    pts = np.random.default_rng(0).uniform(0, 0.3, size=(5, 3, 2))
    assert estimated_utility(models, pts, 1.0) == pytest.approx(3.0)


def test_utility_beta_zero_is_mean_of_means():
    m = TraitRewardModel(KernelConfig(), 1).observe([0.3], 1.0)
    pts = np.array([[[0.3]], [[0.6]]])
    means = [m.predict([0.3])[0], m.predict([0.6])[0]]
    assert estimated_utility([m], pts, 0.0) == pytest.approx(np.mean(means))


def test_utility_hand_evaluation():
    # two tasks, two points, fixed (mu, var) per query
    table = {0.1: (1.0, 0.04), 0.2: (0.5, 0.25), 0.3: (2.0, 0.0), 0.4: (0.0, 1.0)}
    mod = FixedModel(lambda y: table[round(float(y[0]), 6)])
    pts = np.array([[[0.1], [0.3]], [[0.2], [0.4]]])
    b = 2.0
    hand = ((1.0 + b * 0.2) + (2.0 + 0.0) + (0.5 + b * 0.5) + (0.0 + b * 1.0)) / 2
    assert estimated_utility([mod, mod], pts, b) == pytest.approx(hand)
    np.testing.assert_allclose(point_utilities([mod, mod], pts, b),
                               [1.4 + 2.0, 1.5 + 2.0])


# --- selection --------------------------------------------------------------------

def _two_candidates(counts):
    cands = np.array([[[0.0], [0.0]], [[1.0], [0.0]]])
    return CandidateSet(cands, np.array(counts), 400, 2)


def test_select_scores_hand_evaluation(rng):
    # zeta = [1.0, 0.5] via per-candidate means; gamma from counts
    mod_a = FixedModel(lambda y: (1.0 if y[0] < 0.5 else 0.5, 0.0))
    mod_b = FixedModel(lambda y: (0.0, 0.0))
    state = _two_candidates([30, 0])
    sel = select_target(state, [mod_a, mod_b], cfg(beta=0.0), 1, rng, zooming=False)
    g = confidence_radius(np.array([30, 0]), 400)
    np.testing.assert_allclose(sel.scores, [1.0 + 2 * g[0], 0.5 + 2 * g[1]])
    assert sel.index == 1


def test_select_ties_go_to_lowest_index(rng):
    models = empty_models(2, 1, KernelConfig())
    state = _two_candidates([0, 0])
    sel = select_target(state, models, cfg(), 1, rng, zooming=False)
    assert sel.index == 0


def test_select_single_candidate(rng):
    state = CandidateSet(np.array([[[0.25, 0.5]]]), np.array([0]), 100, 3)
    models = empty_models(1, 2, KernelConfig())
    for i in range(1, 5):
        assert select_target(state, models, cfg(), i, rng).index == 0
        state.record_sample(0)


def test_fresh_candidate_wins_equal_zeta(rng):
    models = empty_models(2, 1, KernelConfig())
    state = _two_candidates([3, 0])
    assert select_target(state, models, cfg(), 1, rng, zooming=False).index == 1


def test_target_is_best_point_of_neighborhood(rng):
    m = TraitRewardModel(KernelConfig(), 1).observe([0.9], 5.0)
    state = CandidateSet(np.array([[[1.0]]]), np.array([0]), 400, 3)
    sel = select_target(state, [m], cfg(neighborhood_size=30, beta=0.0), 1, rng)
    assert is_feasible_target(sel.target)
    # zoomed target moves toward the observed peak
    assert abs(sel.target[0, 0] - 0.9) < abs(1.0 - 0.9)


def test_record_sample():
    s = build_candidate_set(None, 2, cfg(grid_resolution=2), 100, U=1)
    s.record_sample(2)
    assert s.counts.tolist() == [0, 0, 1]
    for _ in range(4):
        s.record_sample(2)
    assert s.counts[2] == 5
    assert confidence_radius(6, 100) < confidence_radius(5, 100)
    with pytest.raises(IndexError):
        s.record_sample(3)


def test_step_bookkeeping(rng):
    team = Team([2, 2], [[1.0, 0.0], [0.0, 1.0]])
    c = cfg(grid_resolution=3, neighborhood_size=4)
    state = build_candidate_set(team, 2, c, 10)
    models = empty_models(2, 2, KernelConfig())
    for i in range(1, 11):
        out = step(models, state, c, i, team, rng)
        assert is_valid_assignment(out.X, team)
        assert is_feasible_target(out.achieved)
        for m, model in enumerate(models):
            model.observe(out.achieved[m], float(out.achieved[m].sum()))
    assert state.counts.sum() == 10


def test_step_exact_target_is_achieved(rng):
    team = Team([2, 2], [[1.0, 0.0], [0.0, 1.0]])
    c = cfg(grid_resolution=3, neighborhood_size=1)
    state = build_candidate_set(team, 2, c, 10)
    out = step(empty_models(2, 2, KernelConfig()), state, c, 1, team, rng)
    # grid step 1/2 matches one robot of a species out of two
    np.testing.assert_allclose(out.achieved, out.target)
