"""Central-difference gradient checking.

Verifies every analytic gradient of a model against (L(w+h) - L(w-h)) / 2h
in double precision.  A clean forward pass caches each stage input, every
block's internal activations, and the im2col patches feeding each
convolution.  One probe then recomputes only the values downstream of the
perturbed tensor; for a perturbed convolution or affine weight the layer's
own output is linear in that weight, so its recomputation collapses to a
single row update of the cached output.  This keeps a full sweep over
every weight of a small model within seconds instead of minutes.
Requires dropout = 0 (the loss must be deterministic) and a float64 model.
"""

from __future__ import annotations

import numpy as np

from sigspec.errors import InvalidParameterError
from sigspec.classifier.layers import BN_EPS, BasicBlock, BatchNorm2d, Conv2d, Linear
from sigspec.classifier.wrn import WrnModel, cross_entropy, loss_and_grads
from sigspec.perf import tune_allocator


def _fwd(layer, x):
    return layer.forward(x, train=True, cache=False)


def _bumped_conv_out(base: np.ndarray, cols: np.ndarray, flat_index: int,
                     delta: float, per_filter: int) -> np.ndarray:
    """Conv output after w.flat[flat_index] += delta (output is linear in w)."""
    f, k = divmod(flat_index, per_filter)
    out = base.copy()
    out[f] += (delta * cols[k]).reshape(base.shape[1:])
    return out


class _BlockTrace:
    """Cached intermediates of one basic block for fast partial replay.

    Activations are in the internal (C, N, H, W) layout.
    """

    def __init__(self, block: BasicBlock, x):
        self.block = block
        self.x = x
        n = x.shape[1]
        self.pre = _fwd(block.relu1, _fwd(block.bn1, x))
        self.cols1, self.ho1, self.wo1 = block.conv1.cols(self.pre)
        self.h = block.conv1.apply_cols(self.cols1, n, self.ho1, self.wo1)
        self.cols2 = None  # set below, after the bn2/relu path
        h2 = _fwd(block.relu2, _fwd(block.bn2, self.h))
        # dropout is identity here (p = 0 enforced by the checker)
        self.cols2, self.ho2, self.wo2 = block.conv2.cols(h2)
        self.main = block.conv2.apply_cols(self.cols2, n, self.ho2, self.wo2)
        if block.identity:
            self.skip = x
        else:
            self.colss, self.hos, self.wos = block.shortcut.cols(self.pre)
            self.skip = block.shortcut.apply_cols(self.colss, n, self.hos, self.wos)
        self.out = self.main + self.skip

    def _finish_from_h(self, h):
        h2 = _fwd(self.block.relu2, _fwd(self.block.bn2, h))
        return _fwd(self.block.conv2, h2) + self.skip

    def replay(self, child: str, flat_index: int, delta: float):
        """Block output after child.w.flat[flat_index] += delta."""
        block = self.block
        if child in ("bn1.gamma", "bn1.beta"):
            pre = _fwd(block.relu1, _fwd(block.bn1, self.x))
            h = _fwd(block.conv1, pre)
            h2 = _fwd(block.relu2, _fwd(block.bn2, h))
            main = _fwd(block.conv2, h2)
            skip = self.x if block.identity else _fwd(block.shortcut, pre)
            return main + skip
        if child in ("bn2.gamma", "bn2.beta"):
            return self._finish_from_h(self.h)
        if child == "conv1.w":
            per = block.conv1.in_ch * block.conv1.ksize**2
            return self._finish_from_h(
                _bumped_conv_out(self.h, self.cols1, flat_index, delta, per))
        if child == "conv2.w":
            per = block.conv2.in_ch * block.conv2.ksize**2
            return (
                _bumped_conv_out(self.main, self.cols2, flat_index, delta, per)
                + self.skip
            )
        if child == "shortcut.w":
            per = block.shortcut.in_ch * block.shortcut.ksize**2
            return (
                _bumped_conv_out(self.skip, self.colss, flat_index, delta, per)
                + self.main
            )
        raise KeyError(child)


def check_gradients(
    model: WrnModel,
    x: np.ndarray,
    labels: np.ndarray,
    h: float = 1e-5,
    rel_floor: float = 1e-6,
) -> dict[str, float]:
    """Max relative error per tensor: |analytic - fd| / max(|a|, |fd|, floor).

    Every element of every parameter tensor is probed.
    """
    params = model.named_params()
    if any(arr.dtype != np.float64 for arr in params.values()):
        raise InvalidParameterError("gradient checking requires a float64 model")
    if any(
        isinstance(stage, BasicBlock) and stage.drop.p != 0.0
        for _, stage in model.stages
    ):
        raise InvalidParameterError("gradient checking requires dropout = 0")
    tune_allocator()
    x = np.asarray(x, dtype=np.float64)

    _, grads = loss_and_grads(model, x, labels)

    # Clean forward, caching per-stage inputs and block traces.
    stage_in: list[np.ndarray] = []
    traces: dict[int, object] = {}
    a = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    for k, (name, stage) in enumerate(model.stages):
        stage_in.append(a)
        if isinstance(stage, BasicBlock):
            trace = _BlockTrace(stage, a)
            traces[k] = trace
            a = trace.out
        elif isinstance(stage, Conv2d):
            cols, ho, wo = stage.cols(a)
            base = stage.apply_cols(cols, a.shape[1], ho, wo)
            traces[k] = (cols, base)
            a = base
        elif isinstance(stage, BatchNorm2d):
            flat = a.reshape(stage.ch, -1)
            shape = (stage.ch, 1, 1, 1)
            invstd = 1.0 / np.sqrt(flat.var(axis=1) + BN_EPS)
            xhat = (a - flat.mean(axis=1).reshape(shape)) * invstd.reshape(shape)
            traces[k] = xhat
            a = stage.gamma.reshape(shape) * xhat + stage.beta.reshape(shape)
        else:
            a = _fwd(stage, a)
    base_logits = a

    def tail_loss(k: int, value: np.ndarray) -> float:
        for _, stage in model.stages[k + 1:]:
            value = _fwd(stage, value)
        return cross_entropy(value, labels)

    # Consistency guard: the cached replay must reproduce the real forward.
    check = cross_entropy(model.forward(x, "train", cache=False), labels)
    if not np.isclose(cross_entropy(base_logits, labels), check):
        raise InvalidParameterError("cached replay diverged from model forward")

    def stage_loss(k: int, name: str, stage, flat_index: int,
                   delta: float) -> float:
        if isinstance(stage, BasicBlock):
            return tail_loss(k, traces[k].replay(name, flat_index, delta))
        if isinstance(stage, Conv2d):
            cols, base = traces[k]
            per = stage.in_ch * stage.ksize**2
            return tail_loss(
                k, _bumped_conv_out(base, cols, flat_index, delta, per))
        if isinstance(stage, BatchNorm2d):
            xhat = traces[k]
            shape = (stage.ch, 1, 1, 1)
            out = stage.gamma.reshape(shape) * xhat + stage.beta.reshape(shape)
            return tail_loss(k, out)
        if isinstance(stage, Linear):
            return cross_entropy((stage.w @ stage_in[k]).T + stage.b, labels)
        raise InvalidParameterError(f"unexpected parametric stage {type(stage)}")

    errors: dict[str, float] = {}
    for k, (stage_name, stage) in enumerate(model.stages):
        for pname, tensor in stage.params().items():
            full_name = f"{stage_name}.{pname}"
            analytic = grads[full_name].reshape(-1)
            flat = tensor.reshape(-1)
            worst = 0.0
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = stage_loss(k, pname, stage, i, h)
                flat[i] = orig - h
                down = stage_loss(k, pname, stage, i, -h)
                flat[i] = orig
                fd = (up - down) / (2.0 * h)
                rel = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), rel_floor)
                if rel > worst:
                    worst = rel
            errors[full_name] = worst
    return errors
