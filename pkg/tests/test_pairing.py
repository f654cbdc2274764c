import numpy as np
import pytest

from starhnoma import oracle
from starhnoma.channel import REFLECT, TRANSMIT
from starhnoma.pairing import (
    assignment_value,
    build_score_matrix,
    plan_clusters,
    random_plan,
    single_user_plan,
    solve_assignment,
    split_by_strength,
)


def rows_with_norms(norms):
    k = len(norms)
    rows = np.zeros((k, k), dtype=complex)
    for i, n in enumerate(norms):
        rows[i, i] = np.sqrt(n)
    return rows


def test_split_sorted_input():
    strong, weak = split_by_strength(rows_with_norms([4, 3, 2, 1]))
    assert strong == (0, 1) and weak == (2, 3)


def test_split_unsorted_input():
    strong, weak = split_by_strength(rows_with_norms([1, 4, 2, 3]))
    assert strong == (1, 3) and weak == (2, 0)


def test_split_breaks_ties_by_index():
    strong, weak = split_by_strength(rows_with_norms([2, 2, 2, 2]))
    assert strong == (0, 1) and weak == (2, 3)


def test_split_requires_even_count():
    with pytest.raises(ValueError):
        split_by_strength(rows_with_norms([1, 2, 3]))


def test_score_matrix_zero_for_orthogonal_channels():
    rows = rows_with_norms([4, 3, 2, 1])  # mutually orthogonal rows
    states = np.array([REFLECT, TRANSMIT, TRANSMIT, REFLECT])
    assert np.allclose(build_score_matrix(rows, states), 0.0)


def test_score_matrix_masked_when_states_match():
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    states = np.zeros(4, dtype=int)
    assert np.allclose(build_score_matrix(rows, states), 0.0)


def test_score_matrix_matches_scalar_inner_products():
    rng = np.random.default_rng(1)
    rows = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    states = np.array([0, 1, 0, 1, 0, 1])
    groups = split_by_strength(rows)
    score = build_score_matrix(rows, states, groups=groups)
    strong, weak = groups
    for r, i in enumerate(strong):
        for c, j in enumerate(weak):
            inner = sum(rows[j, n] * np.conj(rows[i, n]) for n in range(4))
            expect = abs(inner) ** 2 if states[i] != states[j] else 0.0
            assert score[r, c] == pytest.approx(expect, rel=1e-12)


def test_assignment_diagonal_dominant():
    perm = solve_assignment(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert list(perm) == [0, 1]
    assert assignment_value(np.eye(2), perm) == pytest.approx(2.0)


def test_assignment_anti_diagonal():
    score = np.array([[0.0, 5.0], [5.0, 0.0]])
    perm = solve_assignment(score)
    assert list(perm) == [1, 0]
    assert assignment_value(score, perm) == pytest.approx(10.0)


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(25):
        score = rng.random((6, 6))
        perm = solve_assignment(score)
        _, best = oracle.brute_force_pairing(score)
        assert assignment_value(score, perm) == pytest.approx(best, abs=1e-12)


def test_assignment_beats_random_permutations():
    rng = np.random.default_rng(3)
    score = rng.random((5, 5))
    best = assignment_value(score, solve_assignment(score))
    for _ in range(100):
        perm = rng.permutation(5)
        assert best >= assignment_value(score, perm) - 1e-12


def test_assignment_operation_count_is_cubic():
    rng = np.random.default_rng(4)
    for n in (2, 4, 8, 16):
        stats = {}
        solve_assignment(rng.random((n, n)), stats=stats)
        # inner scans: n augmentations x <=(n+1) waves x <=2(n+1) touches
        assert stats["ops"] <= 3 * (n + 1) ** 3


def test_score_build_touches_each_channel_once():
    rng = np.random.default_rng(5)
    rows = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    states = np.array([0, 1] * 3)
    stats = {}
    build_score_matrix(rows, states, stats=stats)
    assert stats["norm_evals"] == 6
    assert stats["corr_evals"] == 9  # (K/2)^2


def test_plan_two_users():
    rows = rows_with_norms([1, 4])
    plan = plan_clusters(rows, np.array([REFLECT, TRANSMIT]))
    assert plan.clusters == ((0, 1),)
    assert plan.decoding_order == {0: 1, 1: 2}
    assert not plan.state_infeasible


def test_plan_all_same_state_flagged():
    rng = np.random.default_rng(6)
    rows = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    plan = plan_clusters(rows, np.zeros(4, dtype=int))
    assert plan.state_infeasible
    assert sorted(u for c in plan.clusters for u in c) == [0, 1, 2, 3]


def test_plan_matches_exhaustive_masked_assignment():
    rng = np.random.default_rng(7)
    for _ in range(10):
        rows = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        states = rng.integers(0, 2, 6)
        groups = split_by_strength(rows)
        score = build_score_matrix(rows, states, groups=groups)
        _, best = oracle.brute_force_pairing(score)
        plan = plan_clusters(rows, states)
        strong, weak = groups
        achieved = 0.0
        for weak_u, strong_u in plan.clusters:
            r = strong.index(strong_u)
            c = weak.index(weak_u)
            achieved += score[r, c]
        assert achieved == pytest.approx(best, abs=1e-10)


def test_plan_prefers_state_feasible_pairs_when_possible():
    rng = np.random.default_rng(8)
    for _ in range(20):
        rows = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        states = np.array([0, 0, 0, 1, 1, 1])
        rng.shuffle(states)
        plan = plan_clusters(rows, states)
        assert not plan.state_infeasible
        for a, b in plan.clusters:
            assert states[a] != states[b]


def test_plan_invariant_to_relabelling():
    rng = np.random.default_rng(9)
    rows = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    states = np.array([0, 1, 0, 1, 0, 1])
    base = {frozenset(c) for c in plan_clusters(rows, states).clusters}
    perm = rng.permutation(6)
    relabeled = plan_clusters(rows[perm], states[perm])
    mapped = {frozenset(perm[list(c)].tolist()) for c in relabeled.clusters}
    assert mapped == base


def test_plan_orders_by_strength():
    rng = np.random.default_rng(10)
    rows = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    states = np.array([0, 1, 0, 1, 0, 1])
    plan = plan_clusters(rows, states)
    norms = np.linalg.norm(rows, axis=1)
    for weak_u, strong_u in plan.clusters:
        assert norms[strong_u] >= norms[weak_u]
        assert plan.decoding_order[strong_u] == 2
        assert plan.decoding_order[weak_u] == 1
        assert 1 <= plan.decoding_order[weak_u] <= 2


def test_random_plan_state_feasible_when_balanced():
    rng = np.random.default_rng(11)
    states = np.array([0, 0, 1, 1])
    plan = random_plan(states, rng)
    assert not plan.state_infeasible
    for a, b in plan.clusters:
        assert states[a] != states[b]


def test_random_plan_flags_leftovers():
    rng = np.random.default_rng(12)
    plan = random_plan(np.array([0, 0, 0, 1]), rng)
    assert plan.state_infeasible


def test_single_user_plan_shape():
    plan = single_user_plan(3)
    assert plan.clusters == ((0,), (1,), (2,))
    assert plan.cluster_of(2) == 2
