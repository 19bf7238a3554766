"""From-scratch wide-residual-network classifier (numpy forward, backward,
and SGD training)."""

from sigspec.classifier.wrn import (
    WrnConfig,
    WrnModel,
    build,
    cross_entropy,
    forward,
    loss_and_grads,
    param_count,
    softmax,
)
from sigspec.classifier.train import (
    Ensemble,
    TrainConfig,
    ensemble_predict,
    fit,
    load_features,
    predict_proba,
    train,
)
from sigspec.classifier.weights_io import load_weights, save_weights

__all__ = [
    "Ensemble",
    "TrainConfig",
    "WrnConfig",
    "WrnModel",
    "build",
    "cross_entropy",
    "ensemble_predict",
    "fit",
    "forward",
    "load_features",
    "load_weights",
    "loss_and_grads",
    "param_count",
    "predict_proba",
    "save_weights",
    "softmax",
    "train",
]
