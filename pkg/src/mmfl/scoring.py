"""Discounted-UCB scores over per-(client, model) local-loss histories.

For client ``k`` and model ``i`` at round ``t``::

    L = sum_n gamma^(t-1-n) * l_n(k, i)        over rounds n < t where (k, i) trained
    N = sum_n gamma^(t-1-n)                    over the same rounds
    U = sqrt(2 * ln(sum_{n<t} gamma^(t-1-n)) / N)
    A = p_k(i) * (L / N + U)

Only rounds in which client ``k`` actually trained model ``i`` enter L and N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class MissingHistoryError(LookupError):
    """A (client, model) pair has no recorded loss yet (warm-up incomplete)."""


@dataclass(frozen=True)
class ScoreVector:
    client: int
    values: np.ndarray


def discount_mass(t: int, gamma: float) -> float:
    """``sum_{n=0}^{t-1} gamma^(t-1-n)``."""
    if gamma == 1.0:
        return float(t)
    return (1.0 - gamma**t) / (1.0 - gamma)


class LossHistory:
    """Loss observations keyed by (client, model).

    Besides the raw ``(round, loss)`` lists, each pair keeps its discounted
    sums as of the round after its latest observation, so L and N at any
    later round follow from one multiplication by ``gamma ** gap``.
    """

    def __init__(self, num_clients: int, num_models: int, gamma: float = 0.9):
        if not 0 < gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        self.num_clients = num_clients
        self.num_models = num_models
        self.gamma = gamma
        self.entries: dict[tuple[int, int], list[tuple[int, float]]] = {}
        # (L, N) evaluated at round last+1, keyed like entries
        self._sums: dict[tuple[int, int], tuple[float, float]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def _check_pair(self, k: int, i: int) -> None:
        if not (0 <= k < self.num_clients and 0 <= i < self.num_models):
            raise IndexError(f"(client={k}, model={i}) out of range")

    def record(self, round_n: int, client: int, model: int, loss: float) -> None:
        self._check_pair(client, model)
        if not (math.isfinite(loss) and loss >= 0):
            raise ValueError(f"loss must be finite and >= 0, got {loss}")
        if round_n < 0:
            raise ValueError(f"round must be >= 0, got {round_n}")
        key = (client, model)
        seen = self.entries.setdefault(key, [])
        if seen:
            last = seen[-1][0]
            if round_n == last:
                raise ValueError(f"duplicate entry for client={client} model={model} round={round_n}")
            if round_n < last:
                raise ValueError(
                    f"rounds must increase: client={client} model={model} "
                    f"got {round_n} after {last}"
                )
            decay = self.gamma ** (round_n - last)
            big_l, big_n = self._sums[key]
            self._sums[key] = (decay * big_l + loss, decay * big_n + 1.0)
        else:
            self._sums[key] = (loss, 1.0)
        seen.append((round_n, float(loss)))

    def has(self, client: int, model: int) -> bool:
        return (client, model) in self._sums

    def last_round(self, client: int, model: int) -> int:
        return self.entries[(client, model)][-1][0]

    def discounted(self, t: int, client: int, model: int) -> tuple[float, float]:
        """Return ``(L_t, N_t)`` for the pair."""
        key = (client, model)
        if key not in self._sums:
            raise MissingHistoryError(f"no loss recorded for client={client} model={model}")
        last = self.entries[key][-1][0]
        if t <= last:
            raise ValueError(f"query round {t} must come after latest observation {last}")
        decay = self.gamma ** (t - 1 - last)
        big_l, big_n = self._sums[key]
        return decay * big_l, decay * big_n


def ucb_index(history: LossHistory, t: int, client: int, model: int, p: float) -> float:
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    big_l, big_n = history.discounted(t, client, model)
    bonus = math.sqrt(2.0 * math.log(discount_mass(t, history.gamma)) / big_n)
    return p * (big_l / big_n + bonus)


def score_matrix(history: LossHistory, t: int, proportions) -> np.ndarray:
    """``(num_clients, num_models)`` array of UCB indices."""
    p = np.asarray(proportions, dtype=float)
    out = np.empty((history.num_clients, history.num_models))
    for k in range(history.num_clients):
        for i in range(history.num_models):
            out[k, i] = ucb_index(history, t, k, i, p[k, i])
    return out


def score_all(history: LossHistory, t: int, proportions) -> list[ScoreVector]:
    mat = score_matrix(history, t, proportions)
    return [ScoreVector(k, mat[k]) for k in range(history.num_clients)]
