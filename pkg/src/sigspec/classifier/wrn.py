"""Wide residual network: configuration, build, forward, loss, gradients.

The graph is an initial 3x3 convolution of 16 filters, three groups of
pre-activation basic blocks with widths 16k/32k/64k and entry strides
1/2/2, a final batch norm + rectifier, global average pooling, and an
affine output layer.  Depth 6b+4 gives b blocks per group.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass

import numpy as np

from sigspec.errors import InvalidParameterError, ShapeError
from sigspec.classifier.layers import (
    BasicBlock,
    BatchNorm2d,
    Conv2d,
    GlobalAvgPool,
    Layer,
    Linear,
    ReLU,
)
from sigspec.rng import stream


@dataclass(frozen=True)
class WrnConfig:
    depth: int = 10
    widen: int = 1
    dropout: float = 0.3
    in_channels: int = 2
    classes: int = 7
    input_h: int = 96
    input_w: int = 128

    def __post_init__(self):
        if self.depth < 10 or (self.depth - 4) % 6 != 0:
            raise InvalidParameterError(
                f"depth must be 6b+4 with b >= 1, got {self.depth}"
            )
        if self.widen < 1:
            raise InvalidParameterError(f"widen must be >= 1, got {self.widen}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidParameterError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.classes < 2 or self.in_channels < 1:
            raise InvalidParameterError("classes >= 2 and in_channels >= 1 required")

    @property
    def blocks_per_group(self) -> int:
        return (self.depth - 4) // 6

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "WrnConfig":
        return cls(**obj)


class WrnModel:
    """A built network: an ordered list of named stages."""

    def __init__(self, cfg: WrnConfig, stages: list[tuple[str, Layer]]):
        self.cfg = cfg
        self.stages = stages

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, stage in self.stages:
            for key, arr in stage.params().items():
                out[f"{name}.{key}"] = arr
        return out

    def named_state(self) -> dict[str, np.ndarray]:
        out = {}
        for name, stage in self.stages:
            for key, arr in stage.state().items():
                out[f"{name}.{key}"] = arr
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, stage in self.stages:
            for key, arr in getattr(stage, "grads", {}).items():
                out[f"{name}.{key}"] = arr
        return out

    def astype(self, dtype) -> "WrnModel":
        for _, stage in self.stages:
            stage.astype(dtype)
        return self

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of all parameters and running statistics."""
        tensors = {**self.named_params(), **self.named_state()}
        return {k: v.copy() for k, v in tensors.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        tensors = {**self.named_params(), **self.named_state()}
        for key, arr in tensors.items():
            arr[...] = snap[key]

    def clone(self) -> "WrnModel":
        return copy.deepcopy(self)

    def run_stages(self, x: np.ndarray, start: int = 0, *, train: bool,
                   cache: bool = False, rng=None,
                   update_stats: bool = False) -> np.ndarray:
        a = x
        for _, stage in self.stages[start:]:
            a = stage.forward(a, train=train, cache=cache, rng=rng,
                              update_stats=update_stats)
        return a

    def forward(self, x: np.ndarray, mode: str = "eval", *, rng=None,
                cache: bool = False, update_stats: bool = False) -> np.ndarray:
        """Logits for a batch shaped (N, in_channels, input_h, input_w)."""
        if mode not in ("train", "eval"):
            raise InvalidParameterError(f"mode must be train or eval, got {mode!r}")
        expected = (self.cfg.in_channels, self.cfg.input_h, self.cfg.input_w)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"batch shape {x.shape} does not match {expected}")
        # Stages run in the internal (C, N, H, W) layout.
        xt = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
        return self.run_stages(xt, 0, train=(mode == "train"), cache=cache,
                               rng=rng, update_stats=update_stats)

    def backward(self, dlogits: np.ndarray) -> None:
        d = dlogits
        for k in range(len(self.stages) - 1, 0, -1):
            d = self.stages[k][1].backward(d)
        first = self.stages[0][1]
        if isinstance(first, Conv2d):
            first.backward(d, need_dx=False)
        else:
            first.backward(d)


def build(cfg: WrnConfig, seed: int) -> WrnModel:
    """Construct a model with deterministic scaled-Gaussian fan-in init."""
    rng = stream(seed)
    dtype = np.float32
    widths = [16, 16 * cfg.widen, 32 * cfg.widen, 64 * cfg.widen]
    b = cfg.blocks_per_group

    stages: list[tuple[str, Layer]] = [
        ("conv0", Conv2d(cfg.in_channels, widths[0], 3, 1, 1, rng, dtype))
    ]
    in_ch = widths[0]
    for gi, (out_ch, stride) in enumerate(zip(widths[1:], (1, 2, 2))):
        for bi in range(b):
            stages.append(
                (f"g{gi}b{bi}",
                 BasicBlock(in_ch, out_ch, stride if bi == 0 else 1,
                            cfg.dropout, rng, dtype))
            )
            in_ch = out_ch
    stages.append(("bn_out", BatchNorm2d(in_ch, dtype)))
    stages.append(("relu_out", ReLU()))
    stages.append(("pool", GlobalAvgPool()))
    stages.append(("fc", Linear(in_ch, cfg.classes, rng, dtype)))
    return WrnModel(cfg, stages)


def param_count(model: WrnModel) -> int:
    """Number of trainable parameters (running statistics excluded)."""
    return sum(arr.size for arr in model.named_params().values())


def forward(model: WrnModel, batch: np.ndarray, mode: str = "eval",
            rng=None) -> np.ndarray:
    """Functional wrapper over WrnModel.forward."""
    return model.forward(batch, mode, rng=rng)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean multinomial cross-entropy of integer labels."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grads(
    model: WrnModel,
    batch: np.ndarray,
    labels: np.ndarray,
    rng=None,
    update_stats: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Train-mode loss and reverse-mode gradients for every parameter."""
    labels = np.asarray(labels)
    if len(labels) != len(batch):
        raise ShapeError("batch and labels disagree in length")
    logits = model.forward(batch, "train", rng=rng, cache=True,
                           update_stats=update_stats)
    loss = cross_entropy(logits, labels)
    probs = softmax(logits.astype(np.float64)).astype(logits.dtype)
    dlogits = probs
    dlogits[np.arange(len(labels)), labels] -= 1.0
    dlogits /= len(labels)
    model.backward(dlogits)
    return loss, model.named_grads()


def config_to_json(cfg: WrnConfig) -> str:
    return json.dumps(cfg.to_json())
