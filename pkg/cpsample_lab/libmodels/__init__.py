from cpsample_lab.libmodels.analytic import (
    GaussianOracleDenoiser,
    LogisticClassifier,
    ZeroDenoiser,
)
from cpsample_lab.libmodels.labels import LabelSet, assign_random_labels
from cpsample_lab.libmodels.network import (
    Classifier,
    Denoiser,
    Network,
    prob1,
    time_embedding,
    time_embeddings,
)
from cpsample_lab.libmodels.optim import Adam, ema_update
from cpsample_lab.libmodels.training import (
    TrainConfig,
    TrainResult,
    classifier_accuracy,
    classifier_cross_entropy,
    train_classifier,
    train_denoiser,
)

__all__ = [
    "Adam",
    "Classifier",
    "Denoiser",
    "GaussianOracleDenoiser",
    "LabelSet",
    "LogisticClassifier",
    "Network",
    "TrainConfig",
    "TrainResult",
    "ZeroDenoiser",
    "assign_random_labels",
    "classifier_accuracy",
    "classifier_cross_entropy",
    "ema_update",
    "prob1",
    "time_embedding",
    "time_embeddings",
    "train_classifier",
    "train_denoiser",
]
