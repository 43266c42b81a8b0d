import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coclust.errors import InvalidInputError
from coclust.matching import Permutation, matching_kl, pairing_costs, solve_permutation

from . import oracles


def _tables(rng, k, n, zeros=0.0):
    t1 = rng.random((k, n))
    t2 = rng.random((k, n))
    if zeros:
        t1[rng.random((k, n)) < zeros] = 0
    return t1 / t1.sum(), t2 / t2.sum()


def test_permutation_validation_and_inverse():
    h = Permutation([2, 0, 1])
    assert h.inverse().tolist() == [1, 2, 0]
    assert h.inverse().inverse() == h
    with pytest.raises(InvalidInputError):
        Permutation([0, 0, 1])


def test_identical_tables_identity():
    rng = np.random.default_rng(0)
    t, _ = _tables(rng, 4, 5)
    h, kl = solve_permutation(t, t)
    assert h == Permutation.identity(4)
    assert kl == pytest.approx(0.0, abs=1e-15)


def test_recovers_planted_row_shuffle():
    # [DERIVED] t1 = t2 with rows reordered by sigma; then t1[h] == t2 for h = sigma^-1
    rng = np.random.default_rng(1)
    _, t2 = _tables(rng, 6, 4)
    sigma = np.array([3, 5, 0, 1, 4, 2])
    t1 = np.empty_like(t2)
    t1[sigma] = t2
    for solver in ("exhaustive", "assignment"):
        h, kl = solve_permutation(t1, t2, solver)
        assert h.tolist() == sigma.tolist()
        assert kl == pytest.approx(0.0, abs=1e-15)


def test_matching_kl_convention():
    rng = np.random.default_rng(2)
    t1, t2 = _tables(rng, 3, 4)
    h = [1, 2, 0]
    assert matching_kl(t1, t2, Permutation(h)) == pytest.approx(
        oracles.matching_kl_loop(t1, t2, h), rel=1e-13)


def test_pairing_costs_sum_along_permutation():
    rng = np.random.default_rng(3)
    t1, t2 = _tables(rng, 4, 3)
    c = pairing_costs(t1, t2)
    h = np.array([2, 0, 3, 1])
    assert c[h, np.arange(4)].sum() == pytest.approx(matching_kl(t1, t2, h), rel=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_exhaustive_matches_bruteforce(k):
    rng = np.random.default_rng(10 + k)
    for _ in range(10):
        t1, t2 = _tables(rng, k, 3)
        _, kl = solve_permutation(t1, t2, "exhaustive")
        ref, _ = oracles.best_permutation_bruteforce(t1, t2)
        assert kl == pytest.approx(ref, rel=1e-12, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 7), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_assignment_agrees_with_exhaustive(k, n, seed):
    t1, t2 = _tables(np.random.default_rng(seed), k, n)
    _, a = solve_permutation(t1, t2, "assignment")
    _, e = solve_permutation(t1, t2, "exhaustive")
    assert abs(a - e) <= 1e-12 * max(1.0, abs(e))


def test_infinite_entries_handled():
    # zeros in t2 make some pairings infinite; only one pairing is finite
    t1 = np.array([[0.3, 0.0], [0.0, 0.7]])
    t2 = np.array([[0.0, 0.6], [0.4, 0.0]])
    for solver in ("exhaustive", "assignment", "auto"):
        h, kl = solve_permutation(t1, t2, solver)
        assert h.tolist() == [1, 0]
        assert math.isfinite(kl)


def test_all_pairings_infinite():
    t1 = np.array([[0.5, 0.0], [0.5, 0.0]])
    t2 = np.array([[0.0, 0.5], [0.0, 0.5]])
    h, kl = solve_permutation(t1, t2, "assignment")
    assert len(h) == 2 and kl == math.inf


def test_auto_uses_assignment_for_large_k():
    rng = np.random.default_rng(4)
    t1, t2 = _tables(rng, 12, 5)
    h, kl = solve_permutation(t1, t2, "auto")
    _, ref = solve_permutation(t1, t2, "assignment")
    assert kl == ref


def test_bad_inputs():
    with pytest.raises(InvalidInputError):
        solve_permutation(np.ones((2, 2)), np.ones((3, 2)))
    with pytest.raises(InvalidInputError):
        solve_permutation(np.ones((2, 2)), np.ones((2, 2)), "greedy")
