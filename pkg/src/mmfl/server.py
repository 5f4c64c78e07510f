"""Server loop: plan a round, train locally, aggregate per model, evaluate."""

from __future__ import annotations

import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from mmfl import learner, policies
from mmfl.datagen import FederatedDataset
from mmfl.learner import ModelWeights, TrainConfig
from mmfl.policies import RoundPlan
from mmfl.scoring import LossHistory, score_matrix

MULTI_FEDAVG = "MultiFedAvg"
RANKLIST_UCB = "RanklistMultiUCB"
PARETO_UCB = "ParetoMultiUCB"
FEDAVG = "FedAvg"  # single-model baseline, one run per model
POLICIES = (MULTI_FEDAVG, RANKLIST_UCB, PARETO_UCB, FEDAVG)
UCB_POLICIES = (RANKLIST_UCB, PARETO_UCB)

# stream tags for derive_seed
_POLICY_STREAM = 0
_CLIENT_STREAM = 1


def derive_seed(*words: int) -> int:
    """Mix non-negative integers into one 64-bit seed via ``numpy.random.SeedSequence``."""
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1, np.uint64)[0])


@dataclass
class GlobalState:
    models: list[ModelWeights]
    history: LossHistory
    policy: str
    round: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)


@dataclass
class RoundResult:
    plan: RoundPlan
    weights: dict[int, ModelWeights]
    losses: dict[int, float]
    updated: list[bool]

    def losses_for(self, model: int) -> list[float]:
        return [self.losses[c] for c in self.plan.clients_for(model)]


def init_state(
    dataset: FederatedDataset, policy: str, gamma: float = 0.9, seed: int = 0
) -> GlobalState:
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    models = [
        ModelWeights.zeros(dataset.train[0][i].x.shape[1], _num_classes(dataset, i))
        for i in range(dataset.num_models)
    ]
    history = LossHistory(dataset.num_clients, dataset.num_models, gamma)
    rng = np.random.default_rng(derive_seed(seed, _POLICY_STREAM))
    return GlobalState(models, history, policy, 0, rng)


def _num_classes(dataset: FederatedDataset, model: int) -> int:
    if dataset.spec is not None:
        return dataset.spec.models[model].num_classes
    labels = max(int(row[model].y.max()) for row in dataset.train + dataset.test)
    return labels + 1


def aggregate(
    updates: list[tuple[int, ModelWeights, float]], previous: ModelWeights
) -> ModelWeights:
    """Average client weights with coefficients proportional to ``p_k(m)``.

    Computed as ``w_first + sum_k c_k (w_k - w_first)`` in ascending client
    order, with ``c_k = p_k / sum p``. This is the same convex combination,
    and it returns a lone or unanimous update bit-for-bit. An empty update
    list keeps ``previous``.
    """
    if not updates:
        return previous
    for client, w, _ in updates:
        if not w.is_finite():
            raise ValueError(f"non-finite weights from client {client}")
    ordered = sorted(updates, key=lambda u: u[0])
    total = math.fsum(p for _, _, p in ordered)
    if not total > 0:
        raise ValueError("aggregation weights must sum to a positive value")
    anchor = ordered[0][1]
    matrix = anchor.matrix.copy()
    bias = anchor.bias.copy()
    for _, w, p in ordered[1:]:
        coef = p / total
        matrix += coef * (w.matrix - anchor.matrix)
        bias += coef * (w.bias - anchor.bias)
    return ModelWeights(matrix, bias)


def plan_round(state: GlobalState, dataset: FederatedDataset, k: int) -> RoundPlan:
    n, m = dataset.num_clients, dataset.num_models
    if state.policy in (MULTI_FEDAVG, FEDAVG):
        return policies.multi_fedavg(n, k, m, state.rng)
    warm = policies.warmup_plan(n, k, m, state.round)
    if warm is not None:
        return warm
    scores = score_matrix(state.history, state.round, dataset.proportions)
    if state.policy == RANKLIST_UCB:
        return policies.ranklist_select(scores, k, state.round)
    return policies.pareto_select(scores, k, state.rng)


def client_seed(run_seed: int, round_n: int, client: int) -> int:
    return derive_seed(run_seed, _CLIENT_STREAM, round_n, client)


def run_round(
    state: GlobalState,
    dataset: FederatedDataset,
    k: int,
    train: TrainConfig,
    seed: int = 0,
    executor: Executor | None = None,
) -> tuple[GlobalState, RoundResult]:
    """Execute one round and return the advanced state.

    Local training may run on ``executor``; results are consumed in the
    plan's order, so the outcome never depends on completion order.
    """
    plan = plan_round(state, dataset, k)
    t = state.round

    def work(client: int):
        model = plan.assignment[client]
        cfg = replace(train, seed=client_seed(seed, t, client))
        return learner.local_train(state.models[model], dataset.train[client][model], cfg)

    if executor is None:
        outputs = [work(c) for c in plan.selected]
    else:
        outputs = list(executor.map(work, plan.selected))

    weights = {c: out[0] for c, out in zip(plan.selected, outputs)}
    losses = {c: out[1] for c, out in zip(plan.selected, outputs)}
    for c in sorted(plan.selected):
        state.history.record(t, c, plan.assignment[c], losses[c])

    new_models = []
    updated = []
    for model, previous in enumerate(state.models):
        trainers = plan.clients_for(model)
        updates = [(c, weights[c], float(dataset.proportions[c, model])) for c in trainers]
        new_models.append(aggregate(updates, previous))
        updated.append(bool(trainers))
    state.models = new_models
    state.round = t + 1
    return state, RoundResult(plan, weights, losses, updated)


def evaluate(models: list[ModelWeights], dataset: FederatedDataset) -> np.ndarray:
    """Per-model test accuracy averaged over clients, weighted by test-set size."""
    out = np.empty(dataset.num_models)
    for i, w in enumerate(models):
        accs = np.array([learner.accuracy(w, dataset.test[k][i]) for k in range(dataset.num_clients)])
        out[i] = float(np.dot(dataset.test_weights[:, i], accs))
    return out


def iterate_rounds(
    dataset: FederatedDataset,
    policy: str,
    k: int,
    total_rounds: int,
    train: TrainConfig,
    gamma: float = 0.9,
    seed: int = 0,
    workers: int = 1,
) -> Iterator[tuple[GlobalState, RoundResult]]:
    """Yield ``(state, result)`` after each round; ``state`` is shared and mutated."""
    state = init_state(dataset, policy, gamma, seed)
    executor = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for _ in range(total_rounds):
            yield run_round(state, dataset, k, train, seed, executor)
    finally:
        if executor is not None:
            executor.shutdown()


@dataclass(frozen=True)
class MetricsRow:
    round: int
    model: int
    policy: str
    weighted_accuracy: float
    mean_train_loss: float
    num_selected: int
    warmup: bool

    def same_as(self, other: "MetricsRow") -> bool:
        """Equality treating NaN losses as equal."""
        a, b = self.mean_train_loss, other.mean_train_loss
        loss_eq = (math.isnan(a) and math.isnan(b)) or a == b
        return loss_eq and replace(self, mean_train_loss=0.0) == replace(other, mean_train_loss=0.0)


def simulate(
    dataset: FederatedDataset,
    policy: str,
    k: int,
    total_rounds: int,
    train: TrainConfig,
    gamma: float = 0.9,
    seed: int = 0,
    eval_every: int = 10,
    workers: int = 1,
    label: str | None = None,
    on_round: Callable[[GlobalState, RoundResult], None] | None = None,
) -> list[MetricsRow]:
    """Run one multi-model simulation and return its metric rows.

    Evaluates at round 0, every ``eval_every`` completed rounds, and after
    the final round. Loss and client count describe the last executed round.
    """
    label = label or policy
    rows: list[MetricsRow] = []

    def log(state: GlobalState, result: RoundResult | None) -> None:
        accs = evaluate(state.models, dataset)
        for i, acc in enumerate(accs):
            losses = result.losses_for(i) if result else []
            rows.append(
                MetricsRow(
                    round=state.round,
                    model=i,
                    policy=label,
                    weighted_accuracy=float(acc),
                    mean_train_loss=float(np.mean(losses)) if losses else math.nan,
                    num_selected=len(losses),
                    warmup=bool(result and result.plan.warmup),
                )
            )

    log(init_state(dataset, policy, gamma, seed), None)
    for state, result in iterate_rounds(dataset, policy, k, total_rounds, train, gamma, seed, workers):
        if on_round is not None:
            on_round(state, result)
        if state.round % eval_every == 0 or state.round == total_rounds:
            log(state, result)
    return rows


def run_experiment(config, workers: int = 1) -> list[MetricsRow]:
    """Run the experiment described by an :class:`mmfl.expio.ExperimentConfig`.

    The dataset seed depends only on ``master_seed``, so every policy and K
    sees the same data. Training randomness comes from
    ``derive_seed(master_seed, 1, policy index, K)``. In baseline mode each
    model is trained alone with MultiFedAvg at ``max(1, K // M)`` clients
    per round.
    """
    from mmfl.datagen import generate

    dataset = generate(config.dataset_spec())
    seed = run_seed(config.master_seed, config.policy, config.K)
    if config.policy != FEDAVG:
        return simulate(
            dataset, config.policy, config.K, config.total_rounds, config.train,
            config.gamma, seed, config.eval_every, workers,
        )
    k_single = max(1, config.K // dataset.num_models)
    per_model = []
    for i in range(dataset.num_models):
        rows = simulate(
            dataset.model_slice(i), MULTI_FEDAVG, k_single, config.total_rounds,
            config.train, config.gamma, derive_seed(seed, 2, i), config.eval_every,
            workers, label=FEDAVG,
        )
        per_model.append([replace(r, model=i) for r in rows])
    merged = [r for rows in zip(*per_model) for r in rows]
    return merged


def data_seed(master_seed: int) -> int:
    return derive_seed(master_seed, 0)


def run_seed(master_seed: int, policy: str, k: int) -> int:
    return derive_seed(master_seed, 1, POLICIES.index(policy), k)
