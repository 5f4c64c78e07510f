"""Client selection and model assignment policies.

Clients and models are 0-indexed. Score inputs are ``(num_clients,
num_models)`` arrays, or lists of :class:`~mmfl.scoring.ScoreVector`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mmfl.scoring import ScoreVector


@dataclass(frozen=True)
class RoundPlan:
    selected: tuple[int, ...]
    assignment: dict[int, int] = field(hash=False)
    warmup: bool = False

    def __post_init__(self):
        object.__setattr__(self, "selected", tuple(int(c) for c in self.selected))
        if len(set(self.selected)) != len(self.selected):
            raise ValueError(f"client selected twice: {self.selected}")
        if set(self.assignment) != set(self.selected):
            raise ValueError("assignment keys must match the selected clients")

    def __len__(self) -> int:
        return len(self.selected)

    def clients_for(self, model: int) -> list[int]:
        return sorted(c for c in self.selected if self.assignment[c] == model)


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"clients per round K={k} must lie in [1, {n}]")


def as_score_matrix(scores: Sequence[ScoreVector] | np.ndarray) -> np.ndarray:
    if isinstance(scores, np.ndarray):
        mat = scores.astype(float, copy=False)
    else:
        ordered = sorted(scores, key=lambda s: s.client)
        if [s.client for s in ordered] != list(range(len(ordered))):
            raise ValueError("score vectors must cover clients 0..N-1 exactly once")
        mat = np.array([np.asarray(s.values, dtype=float) for s in ordered])
    if mat.ndim != 2:
        raise ValueError(f"scores must be 2-D (clients x models), got shape {mat.shape}")
    return mat


def multi_fedavg(num_clients: int, k: int, num_models: int, rng: np.random.Generator) -> RoundPlan:
    """K clients uniformly without replacement, each given a uniform random model."""
    _check_k(k, num_clients)
    if num_models < 1:
        raise ValueError("num_models must be >= 1")
    chosen = rng.choice(num_clients, size=k, replace=False)
    models = rng.integers(0, num_models, size=k)
    return RoundPlan(tuple(chosen), {int(c): int(m) for c, m in zip(chosen, models)})


def rank_lists(scores) -> list[np.ndarray]:
    """Per model, client ids sorted by descending score (ties: lower id first)."""
    mat = as_score_matrix(scores)
    ids = np.arange(mat.shape[0])
    return [np.lexsort((ids, -mat[:, i])) for i in range(mat.shape[1])]


def ranklist_select(scores, k: int, round_n: int) -> RoundPlan:
    """Round-robin over the per-model rank-lists, starting at model ``round_n mod M``.

    Each turn takes the best not-yet-picked client from the current model's
    list and assigns it that model; stops once ``k`` clients are picked.
    """
    mat = as_score_matrix(scores)
    n, m = mat.shape
    _check_k(k, n)
    lists = rank_lists(mat)
    cursor = [0] * m
    picked: list[int] = []
    assignment: dict[int, int] = {}
    count = 0
    while len(picked) < k:
        model = (round_n + count) % m
        order = lists[model]
        while order[cursor[model]] in assignment:
            cursor[model] += 1
        client = int(order[cursor[model]])
        picked.append(client)
        assignment[client] = model
        count += 1
    return RoundPlan(tuple(picked), assignment)


def pareto_front(scores) -> list[int]:
    """Clients whose score vector no other client strictly dominates."""
    mat = as_score_matrix(scores)
    # ge[j, c]: j >= c everywhere; gt[j, c]: j > c somewhere
    ge = (mat[:, None, :] >= mat[None, :, :]).all(axis=2)
    gt = (mat[:, None, :] > mat[None, :, :]).any(axis=2)
    dominated = (ge & gt).any(axis=0)
    return [int(c) for c in np.flatnonzero(~dominated)]


def best_rank_model(lists: list[np.ndarray], client: int) -> int:
    ranks = [int(np.flatnonzero(order == client)[0]) for order in lists]
    return int(np.argmin(ranks))


def pareto_select(scores, k: int, rng: np.random.Generator) -> RoundPlan:
    """Sample up to ``k`` clients from the Pareto front; each trains its best-ranked model.

    A front smaller than ``k`` is taken whole, so fewer than ``k`` clients
    may train in that round.
    """
    mat = as_score_matrix(scores)
    _check_k(k, mat.shape[0])
    front = pareto_front(mat)
    if len(front) <= k:
        chosen = front
    else:
        chosen = sorted(int(c) for c in rng.choice(front, size=k, replace=False))
    lists = rank_lists(mat)
    return RoundPlan(tuple(chosen), {c: best_rank_model(lists, c) for c in chosen})


def warmup_rounds(num_clients: int, k: int, num_models: int) -> int:
    return math.ceil(num_clients * num_models / k)


def warmup_plan(num_clients: int, k: int, num_models: int, round_n: int) -> RoundPlan | None:
    """Model-major sweep over every (client, model) pair, ``k`` pairs per round.

    Returns ``None`` once every pair has been scheduled. Since ``k <= N``,
    ``k`` consecutive pairs in model-major order never repeat a client.
    """
    _check_k(k, num_clients)
    total = num_clients * num_models
    start = round_n * k
    if round_n < 0:
        raise ValueError(f"round must be >= 0, got {round_n}")
    if start >= total:
        return None
    pairs = [divmod(j, num_clients) for j in range(start, min(start + k, total))]
    return RoundPlan(tuple(c for _, c in pairs), {c: m for m, c in pairs}, warmup=True)
