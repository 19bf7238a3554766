"""SGD training loop, feature loading, and softmax-averaging ensembles.

Training is sequential over shuffled mini-batches: SGD with momentum,
weight decay on convolution/affine weights, and a step learning-rate
schedule.  All randomness (shuffling, dropout) is derived from the
config seed, so a run is reproducible; exact bit-reproducibility
additionally requires a single-threaded BLAS.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sigspec.errors import InvalidParameterError, NumericError
from sigspec.classifier.wrn import (
    WrnConfig,
    WrnModel,
    build,
    cross_entropy,
    loss_and_grads,
    softmax,
)
from sigspec.dataset import ManifestRecord, read_record_iq
from sigspec.perf import tune_allocator
from sigspec.rng import stream
from sigspec.spectro import SpectroConfig, classifier_input

_SHUFFLE_STREAM = 1
_DROPOUT_STREAM = 2


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    lr_decay: float = 0.2
    decay_at: tuple[float, float] = (0.4, 0.7)  # fractions of total epochs

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidParameterError("learning rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidParameterError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidParameterError("batch_size and epochs must be >= 1")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr
        for frac in self.decay_at:
            if epoch >= int(frac * self.epochs):
                lr *= self.lr_decay
        return lr


@dataclass
class Ensemble:
    """Softmax-averaging ensemble of identically shaped models."""

    members: list[WrnModel] = field(default_factory=list)

    def __post_init__(self):
        if self.members:
            head = self.members[0].cfg
            for m in self.members[1:]:
                if (m.cfg.classes, m.cfg.in_channels, m.cfg.input_h, m.cfg.input_w) != (
                    head.classes, head.in_channels, head.input_h, head.input_w
                ):
                    raise InvalidParameterError(
                        "ensemble members must share classes and input shape"
                    )

    @property
    def cfg(self) -> WrnConfig:
        return self.members[0].cfg


def _model_proba(model: WrnModel, x: np.ndarray, batch_size: int) -> np.ndarray:
    chunks = []
    for lo in range(0, len(x), batch_size):
        logits = model.forward(x[lo:lo + batch_size], "eval")
        chunks.append(softmax(logits.astype(np.float64)))
    return np.concatenate(chunks)


def predict_proba(predictor, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Class probabilities from a model, an ensemble, or a callable."""
    tune_allocator()
    if isinstance(predictor, Ensemble):
        return ensemble_predict(predictor, x, batch_size)
    if isinstance(predictor, WrnModel):
        return _model_proba(predictor, x, batch_size)
    return np.asarray(predictor(x), dtype=np.float64)


def ensemble_predict(ensemble: Ensemble, batch: np.ndarray,
                     batch_size: int = 64) -> np.ndarray:
    """Arithmetic mean of member softmax outputs; rows sum to 1."""
    if not ensemble.members:
        raise InvalidParameterError("ensemble has no members")
    acc = np.zeros((len(batch), ensemble.cfg.classes))
    for member in ensemble.members:
        acc += _model_proba(member, batch, batch_size)
    return acc / len(ensemble.members)


def load_features(
    records: list[ManifestRecord],
    root: Path,
    spectro_cfg: SpectroConfig,
    input_h: int,
    input_w: int,
    phase_channel: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Load a manifest subset as (N, ch, H, W) float32 inputs and labels."""
    n = len(records)
    ch = 2 if phase_channel else 1
    x = np.empty((n, ch, input_h, input_w), dtype=np.float32)
    y = np.empty(n, dtype=np.int64)
    for i, rec in enumerate(records):
        series = read_record_iq(root, rec)
        x[i] = classifier_input(series, spectro_cfg, input_h, input_w,
                                phase_channel=phase_channel)
        y[i] = int(rec.signal_class)
    return x, y


def _sgd_step(model: WrnModel, grads: dict[str, np.ndarray],
              velocity: dict[str, np.ndarray], lr: float,
              momentum: float, weight_decay: float) -> None:
    for name, p in model.named_params().items():
        g = grads[name]
        if weight_decay and name.endswith(".w"):
            g = g + weight_decay * p
        v = velocity[name]
        v *= momentum
        v += g
        p -= (lr * v).astype(p.dtype)


def fit(
    model: WrnModel,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    progress=None,
) -> tuple[WrnModel, list[dict]]:
    """Train in place; returns the best-validation-accuracy weights.

    History has one row per epoch: epoch, train_loss, val_acc.
    ``progress``, when given, is called with each history row as it is
    produced.
    """
    if len(x_train) == 0:
        raise InvalidParameterError("empty training split")
    tune_allocator()
    shuffle_rng = stream(cfg.seed, _SHUFFLE_STREAM)
    dropout_rng = stream(cfg.seed, _DROPOUT_STREAM)
    velocity = {k: np.zeros_like(v) for k, v in model.named_params().items()}

    history: list[dict] = []
    best_acc = -1.0
    best_snap = model.snapshot()
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(len(x_train))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = loss_and_grads(
                model, x_train[idx], y_train[idx],
                rng=dropout_rng, update_stats=True,
            )
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            losses.append(loss)
            _sgd_step(model, grads, velocity, lr, cfg.momentum, cfg.weight_decay)
        val_acc = accuracy(model, x_val, y_val) if len(x_val) else 0.0
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_acc": val_acc,
        })
        if progress is not None:
            progress(history[-1])
        if val_acc > best_acc:
            best_acc = val_acc
            best_snap = model.snapshot()
    model.restore(best_snap)
    return model, history


def accuracy(predictor, x: np.ndarray, y: np.ndarray,
             batch_size: int = 64) -> float:
    probs = predict_proba(predictor, x, batch_size)
    return float((probs.argmax(axis=1) == y).mean())


def train(
    train_records: list[ManifestRecord],
    val_records: list[ManifestRecord],
    root: Path,
    wrn_cfg: WrnConfig,
    train_cfg: TrainConfig,
    spectro_cfg: SpectroConfig = SpectroConfig(),
    progress=None,
) -> tuple[WrnModel, list[dict]]:
    """Manifest-level training: load features, build, fit."""
    if not train_records:
        raise InvalidParameterError("empty training split")
    overlap = {r.id for r in train_records} & {r.id for r in val_records}
    if overlap:
        raise InvalidParameterError(f"train/val overlap: {sorted(overlap)[:3]}...")
    phase = wrn_cfg.in_channels == 2
    x_train, y_train = load_features(
        train_records, root, spectro_cfg, wrn_cfg.input_h, wrn_cfg.input_w, phase)
    x_val, y_val = load_features(
        val_records, root, spectro_cfg, wrn_cfg.input_h, wrn_cfg.input_w, phase)
    model = build(wrn_cfg, train_cfg.seed)
    return fit(model, x_train, y_train, x_val, y_val, train_cfg, progress)


def save_history(history: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_acc"])
        writer.writeheader()
        writer.writerows(history)
