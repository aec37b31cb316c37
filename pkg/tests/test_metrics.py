import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmtab.harness.metrics import compute_bur, compute_cmr

totals_st = st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=1, max_size=60)


def test_bur_running_max():
    assert compute_bur([3, 1, 5, 4]).tolist() == [3, 3, 5, 5]
    assert compute_bur([2, 2, 2]).tolist() == [2, 2, 2]


def test_bur_normalized():
    raw, norm = compute_bur([3, 1, 5, 4], r_star=5.0)
    assert norm.tolist() == [0.6, 0.6, 1.0, 1.0]
    assert np.all(norm <= 1.0)


def test_bur_empty_rejected():
    with pytest.raises(ValueError):
        compute_bur([])


def test_cmr_hand_values():
    assert compute_cmr([3, 1, 5, 4], 5.0).tolist() == [2, 6, 6, 7]
    assert not compute_cmr([5, 5, 5], 5.0).any()


@given(totals_st)
def test_bur_nondecreasing(totals):
    b = compute_bur(totals)
    assert np.all(np.diff(b) >= 0)
    assert np.all(b >= np.asarray(totals))


@given(totals_st)
def test_cmr_increments_are_shortfalls(totals):
    r_star = max(totals) + 0.5
    c = compute_cmr(totals, r_star)
    assert np.all(c >= 0) and np.all(np.diff(c) >= 0)
    inc = np.diff(np.concatenate([[0.0], c]))
    # cumsum then diff can round; the running sum itself must match exactly
    acc = 0.0
    for t, ci in zip(totals, c):
        acc = acc + (r_star - t)
        assert ci == acc
    np.testing.assert_allclose(inc, r_star - np.asarray(totals), atol=1e-12)
