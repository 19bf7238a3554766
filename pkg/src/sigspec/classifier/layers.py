"""Neural-network layers with explicit forward and backward passes.

Internally activations use a (C, N, H, W) layout: im2col patch matrices
then have shape (C*k*k, N*Ho*Wo) and are built with k*k contiguous slice
copies, the convolution is a single GEMM whose output is already the
next layer's layout, and batch-norm reductions run over contiguous
memory.  The model wrapper converts from the public (N, C, H, W) batch
layout at entry.

Every layer computes in the dtype of its inputs/weights (float32 for
training, float64 for gradient checking).  Train-mode forwards cache the
tensors backward needs; eval-mode forwards touch no mutable state, so a
frozen model is safe to share across threads.
"""

from __future__ import annotations

import numpy as np

from sigspec.errors import ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    """Common interface: parameter/state dicts plus forward/backward."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def state(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, *, train: bool, cache: bool, rng=None,
                update_stats: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def astype(self, dtype) -> None:
        for name in self._tensor_names():
            setattr(self, name, getattr(self, name).astype(dtype))

    def _tensor_names(self) -> tuple[str, ...]:
        return ()


def _he_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)).astype(dtype)


def _pad_hw(x: np.ndarray, p: int) -> np.ndarray:
    if not p:
        return x
    c, n, h, w = x.shape
    xp = np.zeros((c, n, h + 2 * p, w + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + h, p:p + w] = x
    return xp


def _patches(x: np.ndarray, k: int, s: int, p: int) -> tuple[np.ndarray, int, int]:
    """Patch matrix (C*k*k, N*Ho*Wo) of a (C, N, H, W) activation."""
    c, n, h, w = x.shape
    ho = (h + 2 * p - k) // s + 1
    wo = (w + 2 * p - k) // s + 1
    xp = _pad_hw(x, p)
    out = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            out[:, i, j] = xp[:, :, i:i + s * ho:s, j:j + s * wo:s]
    return out.reshape(c * k * k, n * ho * wo), ho, wo


class Conv2d(Layer):
    """2-D convolution, no bias.  Weight shape (out_ch, in_ch, k, k)."""

    def __init__(self, in_ch, out_ch, ksize, stride, pad,
                 rng: np.random.Generator, dtype=np.float32):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.ksize, self.stride, self.pad = ksize, stride, pad
        fan_in = in_ch * ksize * ksize
        self.w = _he_normal(rng, (out_ch, in_ch, ksize, ksize), fan_in, dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._x = None

    def params(self):
        return {"w": self.w}

    def _tensor_names(self):
        return ("w",)

    def cols(self, x: np.ndarray) -> tuple[np.ndarray, int, int]:
        """Patch matrix (in_ch*k*k, N*Ho*Wo) via k*k slice copies."""
        return _patches(x, self.ksize, self.stride, self.pad)

    def apply_cols(self, cols: np.ndarray, n: int, ho: int, wo: int) -> np.ndarray:
        """GEMM step of the forward, reusable with precomputed patches."""
        out = self.w.reshape(self.out_ch, -1) @ cols
        return out.reshape(self.out_ch, n, ho, wo)

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        if x.shape[0] != self.in_ch:
            raise ShapeError(f"expected {self.in_ch} channels, got {x.shape[0]}")
        cols, ho, wo = self.cols(x)
        self._x = x if cache else None
        return self.apply_cols(cols, x.shape[1], ho, wo)

    def backward(self, dout, need_dx: bool = True):
        x, self._x = self._x, None
        c, n, h, w = x.shape
        k, s, p = self.ksize, self.stride, self.pad
        ho, wo = dout.shape[2], dout.shape[3]
        dout2d = np.ascontiguousarray(dout).reshape(self.out_ch, -1)

        cols, _, _ = self.cols(x)
        # (CKK, NHW) @ (NHW, F): the fast GEMM orientation for thin filters.
        self.grads["w"] = np.ascontiguousarray(
            (cols @ dout2d.T).T
        ).reshape(self.w.shape)
        if not need_dx:
            return None

        dpatches = (self.w.reshape(self.out_ch, -1).T @ dout2d).reshape(
            c, k, k, n, ho, wo
        )
        dxp = np.zeros((c, n, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dpatches[:, i, j]
        return dxp[:, :, p:p + h, p:p + w] if p else dxp


class BatchNorm2d(Layer):
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes by batch statistics (biased variance) and,
    when asked, folds them into the running statistics; eval mode uses
    the running statistics only.
    """

    def __init__(self, ch, dtype=np.float32):
        self.ch = ch
        self.gamma = np.ones(ch, dtype=dtype)
        self.beta = np.zeros(ch, dtype=dtype)
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def _tensor_names(self):
        return ("gamma", "beta", "running_mean", "running_var")

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        flat = x.reshape(self.ch, -1)
        if train:
            mean = flat.mean(axis=1)
            var = flat.var(axis=1)
            if update_stats:
                m = BN_MOMENTUM
                self.running_mean[...] = (1 - m) * self.running_mean + m * mean
                self.running_var[...] = (1 - m) * self.running_var + m * var
        else:
            mean, var = self.running_mean, self.running_var
        invstd = 1.0 / np.sqrt(var + BN_EPS)
        shape = (self.ch, 1, 1, 1)
        xhat = (x - mean.reshape(shape)) * invstd.reshape(shape)
        if cache:
            self._cache = (xhat, invstd)
        return self.gamma.reshape(shape) * xhat + self.beta.reshape(shape)

    def backward(self, dout):
        xhat, invstd = self._cache
        self._cache = None
        shape = (self.ch, 1, 1, 1)
        n = dout.size // self.ch
        dflat = dout.reshape(self.ch, -1)
        xflat = xhat.reshape(self.ch, -1)
        self.grads["gamma"] = np.einsum("ck,ck->c", dflat, xflat)
        self.grads["beta"] = dflat.sum(axis=1)
        dxhat = dout * self.gamma.reshape(shape)
        sum_d = self.grads["beta"] * self.gamma
        sum_dx = self.grads["gamma"] * self.gamma
        return (invstd.reshape(shape) / n) * (
            n * dxhat - sum_d.reshape(shape) - xhat * sum_dx.reshape(shape)
        )


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        out = np.maximum(x, 0)
        if cache:
            self._mask = x > 0
        return out

    def backward(self, dout):
        mask, self._mask = self._mask, None
        return dout * mask


class Dropout(Layer):
    """Inverted dropout: active only in train mode with p > 0."""

    def __init__(self, p):
        self.p = p
        self._scaled_mask = None

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        if not train or self.p == 0.0:
            if cache:
                self._scaled_mask = None
            return x
        if rng is None:
            raise ValueError("train-mode dropout requires an rng")
        if x.dtype == np.float32:
            keep = (rng.random(x.shape, dtype=np.float32) >= self.p).astype(x.dtype)
        else:
            keep = (rng.random(x.shape) >= self.p).astype(x.dtype)
        keep /= 1.0 - self.p
        if cache:
            self._scaled_mask = keep
        return x * keep

    def backward(self, dout):
        mask, self._scaled_mask = self._scaled_mask, None
        return dout if mask is None else dout * mask


class GlobalAvgPool(Layer):
    """(C, N, H, W) -> (C, N) mean over the spatial axes."""

    def __init__(self):
        self._hw = None

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        if cache:
            self._hw = x.shape[2:]
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        h, w = self._hw
        self._hw = None
        return np.broadcast_to(
            dout[:, :, None, None] / (h * w), dout.shape + (h, w)
        ).copy()


class Linear(Layer):
    """Affine head: (C, N) features in, (N, classes) logits out."""

    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        self.w = _he_normal(rng, (out_features, in_features), in_features, dtype)
        self.b = np.zeros(out_features, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self._x = None

    def params(self):
        return {"w": self.w, "b": self.b}

    def _tensor_names(self):
        return ("w", "b")

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        if cache:
            self._x = x
        return (self.w @ x).T + self.b

    def backward(self, dout):
        x, self._x = self._x, None
        self.grads["w"] = dout.T @ x.T
        self.grads["b"] = dout.sum(axis=0)
        return self.w.T @ dout.T


class BasicBlock(Layer):
    """Pre-activation residual block: two 3x3 convolutions with batch
    normalization, rectifier, and dropout between them.

    When the channel count or stride changes, the skip path is a 1x1
    projection convolution applied to the pre-activated input; otherwise
    it is the identity.
    """

    def __init__(self, in_ch, out_ch, stride, dropout, rng, dtype=np.float32):
        self.bn1 = BatchNorm2d(in_ch, dtype)
        self.relu1 = ReLU()
        self.conv1 = Conv2d(in_ch, out_ch, 3, stride, 1, rng, dtype)
        self.bn2 = BatchNorm2d(out_ch, dtype)
        self.relu2 = ReLU()
        self.drop = Dropout(dropout)
        self.conv2 = Conv2d(out_ch, out_ch, 3, 1, 1, rng, dtype)
        self.identity = in_ch == out_ch and stride == 1
        self.shortcut = (
            None if self.identity else Conv2d(in_ch, out_ch, 1, stride, 0, rng, dtype)
        )

    def _children(self) -> dict[str, Layer]:
        kids = {
            "bn1": self.bn1, "conv1": self.conv1,
            "bn2": self.bn2, "conv2": self.conv2,
        }
        if self.shortcut is not None:
            kids["shortcut"] = self.shortcut
        return kids

    def params(self):
        out = {}
        for name, child in self._children().items():
            for key, arr in child.params().items():
                out[f"{name}.{key}"] = arr
        return out

    def state(self):
        out = {}
        for name, child in self._children().items():
            for key, arr in child.state().items():
                out[f"{name}.{key}"] = arr
        return out

    @property
    def grads(self):
        out = {}
        for name, child in self._children().items():
            for key, arr in getattr(child, "grads", {}).items():
                out[f"{name}.{key}"] = arr
        return out

    def astype(self, dtype):
        for child in self._children().values():
            child.astype(dtype)

    def forward(self, x, *, train, cache, rng=None, update_stats=False):
        kw = dict(train=train, cache=cache, rng=rng, update_stats=update_stats)
        pre = self.relu1.forward(self.bn1.forward(x, **kw), **kw)
        h = self.conv1.forward(pre, **kw)
        h = self.relu2.forward(self.bn2.forward(h, **kw), **kw)
        h = self.drop.forward(h, **kw)
        h = self.conv2.forward(h, **kw)
        sc = x if self.identity else self.shortcut.forward(pre, **kw)
        return h + sc

    def backward(self, dout):
        dpre = self.conv1.backward(
            self.bn2.backward(self.relu2.backward(self.drop.backward(
                self.conv2.backward(dout)
            )))
        )
        if self.identity:
            dx_skip = dout
        else:
            dpre = dpre + self.shortcut.backward(dout)
            dx_skip = 0.0
        dx = self.bn1.backward(self.relu1.backward(dpre))
        return dx + dx_skip
