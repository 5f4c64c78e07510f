"""Experiment configuration files and CSV metrics logs.

Config files are flat ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from mmfl.datagen import ModelSpec, SyntheticSpec
from mmfl.learner import TrainConfig
from mmfl.server import FEDAVG, POLICIES, MetricsRow, data_seed

CSV_HEADER = ("round", "model", "policy", "weighted_accuracy", "mean_train_loss", "num_selected", "warmup")

DEFAULT_MODELS = "60:5:100;30:10:100"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    num_clients: int
    policy: str
    K: int
    total_rounds: int
    models: tuple[ModelSpec, ...] = field(default_factory=lambda: _parse_models(DEFAULT_MODELS))
    alpha: float = 1.0
    beta: float = 1.0
    iid: bool = False
    test_fraction: float = 0.2
    eval_every: int = 10
    train: TrainConfig = TrainConfig()
    gamma: float = 0.9
    master_seed: int = 0
    baseline_mode: bool = False

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        # baseline mode and the FedAvg policy id name the same thing
        if self.baseline_mode or self.policy == FEDAVG:
            object.__setattr__(self, "baseline_mode", True)
            object.__setattr__(self, "policy", FEDAVG)

    def dataset_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            num_clients=self.num_clients,
            models=self.models,
            alpha=self.alpha,
            beta=self.beta,
            iid=self.iid,
            seed=data_seed(self.master_seed),
            test_fraction=self.test_fraction,
        )

    def problems(self) -> list[tuple[str, str]]:
        """Invariant violations as ``(key, message)`` pairs."""
        out = []
        if self.policy not in POLICIES:
            out.append(("policy", f"policy must be one of {', '.join(POLICIES)}"))
        if self.num_clients < 1:
            out.append(("num_clients", "num_clients must be >= 1"))
        if not 1 <= self.K <= max(self.num_clients, 1):
            out.append(("K", f"K must satisfy 1 <= K <= num_clients ({self.num_clients})"))
        if self.total_rounds < 1:
            out.append(("total_rounds", "total_rounds must be >= 1"))
        if not 1 <= self.eval_every <= max(self.total_rounds, 1):
            out.append(("eval_every", "eval_every must satisfy 1 <= eval_every <= total_rounds"))
        if not 0 < self.gamma <= 1:
            out.append(("gamma", "gamma must lie in (0, 1]"))
        if not 0 <= self.master_seed < 2**64:
            out.append(("master_seed", "master_seed must be a 64-bit unsigned integer"))
        if not (self.alpha >= 0 and self.beta >= 0):
            out.append(("alpha" if not self.alpha >= 0 else "beta", "alpha and beta must be >= 0"))
        if not 0 < self.test_fraction < 1:
            out.append(("test_fraction", "test_fraction must lie in (0, 1)"))
        if not self.train.learning_rate > 0:
            out.append(("train.lr", "train.lr must be > 0"))
        for m in self.models:
            try:
                m.validate()
            except ValueError as exc:
                out.append(("models", str(exc)))
        return out


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_models(text: str) -> tuple[ModelSpec, ...]:
    models = []
    for triple in text.split(";"):
        parts = triple.strip().split(":")
        if len(parts) != 3:
            raise ValueError(f"model entry {triple.strip()!r} is not dim:classes:mean_samples")
        models.append(ModelSpec(*(int(p) for p in parts)))
    if not models:
        raise ValueError("models must list at least one dim:classes:mean_samples triple")
    return tuple(models)


def _format_models(models) -> str:
    return ";".join(f"{m.dim}:{m.num_classes}:{m.mean_samples_per_client}" for m in models)


_TOP = {
    "num_clients": int,
    "policy": str,
    "K": int,
    "total_rounds": int,
    "models": _parse_models,
    "alpha": float,
    "beta": float,
    "iid": _parse_bool,
    "test_fraction": float,
    "eval_every": int,
    "gamma": float,
    "master_seed": int,
    "baseline_mode": _parse_bool,
}
_TRAIN = {"train.lr": ("learning_rate", float), "train.batch_size": ("batch_size", int), "train.epochs": ("epochs", int)}
REQUIRED = ("num_clients", "policy", "K", "total_rounds")


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    train: dict = {}
    where: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in where:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {where[key]})")
        if key not in _TOP and key not in _TRAIN:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        where[key] = lineno
        try:
            if key in _TRAIN:
                name, conv = _TRAIN[key]
                train[name] = conv(value)
            else:
                values[key] = _TOP[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    missing = [k for k in REQUIRED if k not in values]
    if values.get("baseline_mode") and "policy" in missing:
        missing.remove("policy")
        values["policy"] = FEDAVG
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    try:
        train_cfg = TrainConfig(**train)
    except ValueError as exc:
        key = next(iter(k for k in _TRAIN if k in where), "train")
        raise ConfigError(f"line {where.get(key, 0)}: {exc}") from None
    cfg = ExperimentConfig(train=train_cfg, **values)
    problems = cfg.problems()
    if problems:
        key, msg = problems[0]
        loc = f"line {where[key]}" if key in where else "defaults"
        raise ConfigError(f"{loc}: {msg}")
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [
        f"num_clients = {cfg.num_clients}",
        f"policy = {cfg.policy}",
        f"K = {cfg.K}",
        f"total_rounds = {cfg.total_rounds}",
        f"models = {_format_models(cfg.models)}",
        f"alpha = {cfg.alpha!r}",
        f"beta = {cfg.beta!r}",
        f"iid = {str(cfg.iid).lower()}",
        f"test_fraction = {cfg.test_fraction!r}",
        f"eval_every = {cfg.eval_every}",
        f"train.lr = {cfg.train.learning_rate!r}",
        f"train.batch_size = {cfg.train.batch_size}",
        f"train.epochs = {cfg.train.epochs}",
        f"gamma = {cfg.gamma!r}",
        f"master_seed = {cfg.master_seed}",
        f"baseline_mode = {str(cfg.baseline_mode).lower()}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    try:
        return parse_config(Path(path).read_text())
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def write_metrics(rows: list[MetricsRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow(
                [r.round, r.model, r.policy, _fmt(r.weighted_accuracy), _fmt(r.mean_train_loss),
                 r.num_selected, int(r.warmup)]
            )


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            MetricsRow(int(r[0]), int(r[1]), r[2], float(r[3]), float(r[4]), int(r[5]), r[6] == "1")
            for r in reader
        ]


def with_cell(cfg: ExperimentConfig, policy: str, k: int) -> ExperimentConfig:
    """The config of one grid cell."""
    return replace(cfg, policy=policy, K=k, baseline_mode=policy == FEDAVG)
