import itertools
from collections import Counter

import numpy as np
import pytest

from mmfl.policies import (
    RoundPlan,
    multi_fedavg,
    pareto_front,
    pareto_select,
    rank_lists,
    ranklist_select,
    warmup_plan,
    warmup_rounds,
)
from mmfl.scoring import ScoreVector

from oracles import brute_force_front


def check_plan(plan: RoundPlan, k: int, n: int, m: int) -> None:
    assert 1 <= len(plan.selected) <= k
    assert len(set(plan.selected)) == len(plan.selected)
    assert set(plan.assignment) == set(plan.selected)
    assert all(0 <= c < n for c in plan.selected)
    assert all(0 <= mm < m for mm in plan.assignment.values())


def test_round_plan_rejects_inconsistent_assignment():
    with pytest.raises(ValueError):
        RoundPlan((0, 1), {0: 0})
    with pytest.raises(ValueError):
        RoundPlan((0, 0), {0: 0})


# --- Multi-FedAvg ----------------------------------------------------------


def test_multi_fedavg_trivial():
    plan = multi_fedavg(1, 1, 1, np.random.default_rng(0))
    assert plan.selected == (0,) and plan.assignment == {0: 0}


def test_multi_fedavg_exhaustive():
    plan = multi_fedavg(10, 10, 3, np.random.default_rng(1))
    assert sorted(plan.selected) == list(range(10))
    check_plan(plan, 10, 10, 3)


def test_multi_fedavg_uniform_frequencies():
    rng = np.random.default_rng(2)
    trials = 10_000
    clients, models = Counter(), Counter()
    for _ in range(trials):
        plan = multi_fedavg(4, 2, 2, rng)
        clients.update(plan.selected)
        models.update(plan.assignment.values())
    for c in range(4):
        assert abs(clients[c] / trials - 0.5) < 0.02
    for m in range(2):
        assert abs(models[m] / (2 * trials) - 0.5) < 0.02


def test_multi_fedavg_deterministic_and_errors():
    a = multi_fedavg(9, 4, 3, np.random.default_rng(5))
    b = multi_fedavg(9, 4, 3, np.random.default_rng(5))
    assert a == b
    with pytest.raises(ValueError):
        multi_fedavg(3, 4, 2, np.random.default_rng(0))


# --- rank lists and Ranklist-Multi-UCB -------------------------------------

# clients 0,1,2 stand for c1,c2,c3: R(1) = [c3, c1, c2], R(2) = [c3, c2, c1]
HAND_SCORES = np.array([[0.5, 0.1], [0.2, 0.4], [0.9, 0.8]])


def test_rank_lists_descending_with_id_ties():
    lists = rank_lists(HAND_SCORES)
    assert lists[0].tolist() == [2, 0, 1]
    assert lists[1].tolist() == [2, 1, 0]
    tied = rank_lists(np.array([[1.0], [2.0], [1.0], [2.0]]))
    assert tied[0].tolist() == [1, 3, 0, 2]


def test_ranklist_hand_trace_round_zero():
    plan = ranklist_select(HAND_SCORES, 2, 0)
    assert plan.selected == (2, 1)
    assert plan.assignment == {2: 0, 1: 1}


def test_ranklist_hand_trace_start_offset():
    plan = ranklist_select(HAND_SCORES, 2, 1)
    assert plan.selected == (2, 0)
    assert plan.assignment == {2: 1, 0: 0}


def test_ranklist_accepts_score_vectors():
    vectors = [ScoreVector(k, HAND_SCORES[k]) for k in (2, 0, 1)]
    assert ranklist_select(vectors, 2, 0) == ranklist_select(HAND_SCORES, 2, 0)


def test_ranklist_single_model_is_top_k():
    rng = np.random.default_rng(3)
    scores = rng.random((12, 1))
    plan = ranklist_select(scores, 5, 7)
    assert list(plan.selected) == np.argsort(-scores[:, 0])[:5].tolist()
    assert set(plan.assignment.values()) == {0}


def test_ranklist_selects_exactly_k():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n, m = int(rng.integers(1, 15)), int(rng.integers(1, 5))
        k = int(rng.integers(1, n + 1))
        plan = ranklist_select(rng.random((n, m)), k, int(rng.integers(0, 50)))
        assert len(plan) == k
        check_plan(plan, k, n, m)


def test_ranklist_invariant_under_monotone_transform():
    rng = np.random.default_rng(6)
    for _ in range(100):
        scores = rng.random((10, 3))
        moved = scores.copy()
        moved[:, 1] = np.exp(3 * moved[:, 1]) + 7.0
        moved[:, 2] = 2.5 * moved[:, 2] + 0.3
        assert ranklist_select(scores, 4, 2) == ranklist_select(moved, 4, 2)


def test_ranklist_k_too_large():
    with pytest.raises(ValueError):
        ranklist_select(HAND_SCORES, 4, 0)


# --- Pareto front and Pareto-Multi-UCB --------------------------------------


def test_pareto_examples():
    assert pareto_front(np.array([[1, 0], [0, 1], [0.5, 0.5]])) == [0, 1, 2]
    assert pareto_front(np.array([[0.5, 0.5], [0.2, 0.3]])) == [0]
    assert pareto_front(np.ones((4, 3))) == [0, 1, 2, 3]


def test_pareto_weak_domination_removes():
    # equal in one coordinate, worse in the other
    assert pareto_front(np.array([[1.0, 2.0], [1.0, 1.0]])) == [0]


def test_pareto_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n, m = int(rng.integers(1, 51)), int(rng.integers(1, 5))
        # coarse grid values force ties
        scores = rng.integers(0, 4, size=(n, m)).astype(float) if rng.random() < 0.5 else rng.random((n, m))
        assert pareto_front(scores) == brute_force_front(scores)


def test_pareto_select_two_client_trace():
    plan = pareto_select(np.array([[1.0, 0.0], [0.0, 1.0]]), 2, np.random.default_rng(0))
    assert plan.selected == (0, 1)
    assert plan.assignment == {0: 0, 1: 1}


def test_pareto_select_singleton_front():
    scores = np.array([[0.1, 0.2], [0.9, 0.9], [0.3, 0.1], [0.4, 0.5]])
    plan = pareto_select(scores, 3, np.random.default_rng(0))
    assert plan.selected == (1,)


def test_pareto_select_uniform_over_front():
    # five clients on the anti-diagonal plus two dominated ones
    front = np.array([[i, 4 - i] for i in range(5)], dtype=float)
    scores = np.vstack([front, [[0.0, 0.0], [1.0, 1.0]]])
    rng = np.random.default_rng(8)
    trials = 10_000
    counts = Counter()
    for _ in range(trials):
        plan = pareto_select(scores, 2, rng)
        assert len(plan) == 2
        counts.update(plan.selected)
    assert set(counts) <= set(range(5))
    for c in range(5):
        assert abs(counts[c] / trials - 0.4) < 0.02


def test_pareto_assignment_best_rank_lowest_model_on_tie():
    # client 0 is ranked first in both lists
    scores = np.array([[0.9, 0.9], [0.1, 0.2], [0.2, 0.1]])
    plan = pareto_select(scores, 3, np.random.default_rng(0))
    assert plan.assignment == {0: 0}


def test_pareto_select_plans_are_valid():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n, m = int(rng.integers(1, 20)), int(rng.integers(1, 4))
        k = int(rng.integers(1, n + 1))
        scores = rng.random((n, m))
        plan = pareto_select(scores, k, rng)
        check_plan(plan, k, n, m)
        assert set(plan.selected) <= set(pareto_front(scores))


# --- warm-up ------------------------------------------------------------------


def test_warmup_hand_schedule():
    assert warmup_plan(2, 2, 2, 0).assignment == {0: 0, 1: 0}
    assert warmup_plan(2, 2, 2, 1).assignment == {0: 1, 1: 1}
    assert warmup_plan(2, 2, 2, 2) is None
    assert warmup_plan(2, 2, 2, 0).warmup


def test_warmup_single_pair():
    assert warmup_plan(1, 1, 1, 0).assignment == {0: 0}
    assert warmup_plan(1, 1, 1, 1) is None
    assert warmup_rounds(1, 1, 1) == 1


def warmup_pairs(n, m, k):
    pairs = []
    r = 0
    while (plan := warmup_plan(n, k, m, r)) is not None:
        check_plan(plan, k, n, m)
        pairs.extend((c, plan.assignment[c]) for c in plan.selected)
        r += 1
    return pairs, r


@pytest.mark.parametrize("n,m,k", [(n, m, k) for n in range(1, 8) for m in range(1, 4) for k in range(1, n + 1)])
def test_warmup_covers_pairs_once(n, m, k):
    pairs, rounds = warmup_pairs(n, m, k)
    assert sorted(pairs) == sorted(itertools.product(range(n), range(m)))
    assert rounds == warmup_rounds(n, k, m)


def test_warmup_k_too_large():
    with pytest.raises(ValueError):
        warmup_plan(2, 3, 1, 0)
