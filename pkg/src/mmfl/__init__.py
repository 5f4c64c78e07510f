"""Multi-model federated learning simulator.

Several unrelated softmax-regression models are trained over one client
pool, each client training at most one model per round. Client selection
and model assignment are handled by Multi-FedAvg, Ranklist-Multi-UCB or
Pareto-Multi-UCB.
"""

from mmfl.datagen import FederatedDataset, ModelSpec, SyntheticSpec, generate
from mmfl.learner import Examples, ModelWeights, TrainConfig
from mmfl.policies import RoundPlan
from mmfl.scoring import LossHistory, MissingHistoryError, ScoreVector

__version__ = "0.1.0"

__all__ = [
    "Examples",
    "FederatedDataset",
    "LossHistory",
    "MissingHistoryError",
    "ModelSpec",
    "ModelWeights",
    "RoundPlan",
    "ScoreVector",
    "SyntheticSpec",
    "TrainConfig",
    "generate",
]
