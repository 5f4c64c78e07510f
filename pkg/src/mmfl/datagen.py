"""Synthetic(alpha, beta) and Synthetic-IID federated datasets.

Each model gets its own labelled data at every client. Ground-truth
generators follow the usual Synthetic construction: per-client softmax
weights ``W_k, b_k ~ N(u_k, 1)`` with ``u_k ~ N(0, alpha)`` and features
``x ~ N(v_k, diag(j^-1.2))`` where ``v_k ~ N(B_k, 1)``, ``B_k ~ N(0, beta)``.
In IID mode every client shares one generator and zero feature mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mmfl.learner import Examples

SAMPLE_COUNT_SIGMA = 0.5
MIN_SAMPLES = 4
DEFAULT_TEST_FRACTION = 0.2


@dataclass(frozen=True)
class ModelSpec:
    dim: int
    num_classes: int
    mean_samples_per_client: int = 100

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.mean_samples_per_client < MIN_SAMPLES:
            raise ValueError(
                f"mean_samples_per_client must be >= {MIN_SAMPLES}, "
                f"got {self.mean_samples_per_client}"
            )


# the two tasks of the synthetic experiments
PAPER_MODELS = (ModelSpec(60, 5), ModelSpec(30, 10))


@dataclass(frozen=True)
class SyntheticSpec:
    num_clients: int
    models: tuple[ModelSpec, ...] = PAPER_MODELS
    alpha: float = 1.0
    beta: float = 1.0
    iid: bool = False
    seed: int = 0
    test_fraction: float = DEFAULT_TEST_FRACTION

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))

    def validate(self) -> None:
        if self.num_clients < 1:
            raise ValueError(f"num_clients must be >= 1, got {self.num_clients}")
        if not self.models:
            raise ValueError("at least one model is required")
        for m in self.models:
            m.validate()
        if not (self.alpha >= 0 and self.beta >= 0):
            raise ValueError("alpha and beta must be non-negative")
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class FederatedDataset:
    """Per-client, per-model train and test examples.

    ``train[k][i]`` and ``test[k][i]`` hold client ``k``'s data for model ``i``.
    """

    train: list[list[Examples]]
    test: list[list[Examples]]
    spec: SyntheticSpec | None = None
    proportions: np.ndarray = field(init=False, repr=False)
    test_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        train_sizes = np.array([[len(e) for e in row] for row in self.train], dtype=float)
        test_sizes = np.array([[len(e) for e in row] for row in self.test], dtype=float)
        self.proportions = train_sizes / train_sizes.sum(axis=0)
        self.test_weights = test_sizes / test_sizes.sum(axis=0)

    @property
    def num_clients(self) -> int:
        return len(self.train)

    @property
    def num_models(self) -> int:
        return len(self.train[0])

    def model_slice(self, model: int) -> "FederatedDataset":
        """Single-model view used by the one-model FedAvg baseline."""
        spec = None
        if self.spec is not None:
            spec = replace(self.spec, models=(self.spec.models[model],))
        return FederatedDataset(
            [[row[model]] for row in self.train], [[row[model]] for row in self.test], spec
        )

    def pooled(self, model: int, split: str = "train") -> Examples:
        parts = self.train if split == "train" else self.test
        return Examples(
            np.concatenate([row[model].x for row in parts]),
            np.concatenate([row[model].y for row in parts]),
        )


def split_train_test(
    data: Examples, test_fraction: float = DEFAULT_TEST_FRACTION, seed=0
) -> tuple[Examples, Examples]:
    """Shuffle and split into (train, test).

    The test part holds ``max(1, round(test_fraction * n))`` examples, capped
    at ``n - 1`` so the train part is never empty.
    """
    n = len(data)
    if n < 2:
        raise ValueError(f"need at least 2 examples to split, got {n}")
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = min(n - 1, max(1, round(test_fraction * n)))
    order = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = order[:n_test], order[n_test:]
    return (
        Examples(data.x[train_idx], data.y[train_idx]),
        Examples(data.x[test_idx], data.y[test_idx]),
    )


def _sample_counts(rng: np.random.Generator, n: int, mean: int) -> np.ndarray:
    # log-normal with the requested mean: exp(mu + sigma^2/2) == mean
    mu = math.log(mean) - SAMPLE_COUNT_SIGMA**2 / 2
    counts = np.rint(rng.lognormal(mu, SAMPLE_COUNT_SIGMA, size=n)).astype(int)
    return np.maximum(counts, MIN_SAMPLES)


def _generate_model(spec: SyntheticSpec, model: ModelSpec, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    n = spec.num_clients
    d, c = model.dim, model.num_classes
    counts = _sample_counts(rng, n, model.mean_samples_per_client)
    std_x = np.power(np.arange(1, d + 1, dtype=float), -0.6)  # sqrt of j^-1.2

    if spec.iid:
        w_shared = rng.normal(0.0, 1.0, (c, d))
        b_shared = rng.normal(0.0, 1.0, c)
        mean_x = np.zeros((n, d))
    else:
        u = rng.normal(0.0, spec.alpha, n)
        big_b = rng.normal(0.0, spec.beta, n)
        mean_x = rng.normal(big_b[:, None], 1.0, (n, d))

    per_client = []
    for k in range(n):
        if spec.iid:
            w, b = w_shared, b_shared
        else:
            w = rng.normal(u[k], 1.0, (c, d))
            b = rng.normal(u[k], 1.0, c)
        x = mean_x[k] + std_x * rng.standard_normal((counts[k], d))
        y = np.argmax(x @ w.T + b, axis=1)
        split_seed = rng.integers(2**63)
        per_client.append(split_train_test(Examples(x, y), spec.test_fraction, split_seed))
    return per_client


def generate(spec: SyntheticSpec) -> FederatedDataset:
    """Build the federated dataset described by ``spec``.

    Deterministic in ``spec``; every model is drawn from its own child
    seed so models are statistically unrelated.
    """
    spec.validate()
    children = np.random.SeedSequence(spec.seed).spawn(len(spec.models))
    per_model = [_generate_model(spec, m, s) for m, s in zip(spec.models, children)]
    train = [[per_model[i][k][0] for i in range(len(spec.models))] for k in range(spec.num_clients)]
    test = [[per_model[i][k][1] for i in range(len(spec.models))] for k in range(spec.num_clients)]
    return FederatedDataset(train, test, spec)


# --- text dump -------------------------------------------------------------

_HEADER = "# mmfl-dataset"


def _spec_line(spec: SyntheticSpec | None, dataset: FederatedDataset) -> str:
    if spec is None:
        return f"{_HEADER} num_clients={dataset.num_clients} num_models={dataset.num_models}"
    models = ";".join(f"{m.dim}:{m.num_classes}:{m.mean_samples_per_client}" for m in spec.models)
    return (
        f"{_HEADER} alpha={spec.alpha!r} beta={spec.beta!r} iid={int(spec.iid)} "
        f"num_clients={spec.num_clients} models={models} seed={spec.seed} "
        f"test_fraction={spec.test_fraction!r}"
    )


def dump_dataset(dataset: FederatedDataset, path) -> None:
    """Write one line per example: ``client model split label f_1 ... f_d``.

    Floats use ``repr`` so reading the file back is value-exact.
    """
    with open(path, "w", newline="\n") as fh:
        fh.write(_spec_line(dataset.spec, dataset) + "\n")
        for k in range(dataset.num_clients):
            for i in range(dataset.num_models):
                for split, ex in (("train", dataset.train[k][i]), ("test", dataset.test[k][i])):
                    for xs, label in zip(ex.x, ex.y):
                        feats = " ".join(repr(float(v)) for v in xs)
                        fh.write(f"{k} {i} {split} {int(label)} {feats}\n")


def _parse_header(line: str) -> SyntheticSpec | None:
    fields = dict(tok.split("=", 1) for tok in line[len(_HEADER) :].split())
    if "models" not in fields:
        return None
    models = tuple(
        ModelSpec(*(int(v) for v in triple.split(":"))) for triple in fields["models"].split(";")
    )
    return SyntheticSpec(
        num_clients=int(fields["num_clients"]),
        models=models,
        alpha=float(fields["alpha"]),
        beta=float(fields["beta"]),
        iid=fields["iid"] == "1",
        seed=int(fields["seed"]),
        test_fraction=float(fields["test_fraction"]),
    )


def load_dataset(path) -> FederatedDataset:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(_HEADER):
        raise ValueError(f"{path}: missing '{_HEADER}' header line")
    spec = _parse_header(text[0])
    rows: dict[tuple[int, int, str], tuple[list, list]] = {}
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.split()
        if len(parts) < 5 or parts[2] not in ("train", "test"):
            raise ValueError(f"{path}:{lineno}: malformed example line")
        key = (int(parts[0]), int(parts[1]), parts[2])
        xs, ys = rows.setdefault(key, ([], []))
        ys.append(int(parts[3]))
        xs.append([float(v) for v in parts[4:]])
    num_clients = 1 + max(k for k, _, _ in rows)
    num_models = 1 + max(i for _, i, _ in rows)

    def block(k, i, split):
        xs, ys = rows[(k, i, split)]
        return Examples(np.array(xs, dtype=float), np.array(ys, dtype=int))

    train = [[block(k, i, "train") for i in range(num_models)] for k in range(num_clients)]
    test = [[block(k, i, "test") for i in range(num_models)] for k in range(num_clients)]
    return FederatedDataset(train, test, spec)
