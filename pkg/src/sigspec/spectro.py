"""Spectrogram feature images.

A time series of length R*C is reshaped row-major into R time slices of
C samples; each row is windowed, Fourier transformed, and optionally
fftshifted.  The two feature channels are the log power ln(|X|^2 + eps)
and the phase arg(X) in (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sigspec.errors import InvalidParameterError, ShapeError
from sigspec.sigsim import SIGNAL_LENGTH, FloatIq, IqSeries

DEFAULT_ROWS = 384
DEFAULT_COLS = 512


@dataclass(frozen=True)
class SpectroConfig:
    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS
    epsilon: float = 1e-12
    window: str = "hanning"
    fftshift: bool = True

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidParameterError("rows and cols must be positive")
        if self.epsilon <= 0:
            raise InvalidParameterError("epsilon must be positive")
        if self.window not in ("hanning", "none"):
            raise InvalidParameterError(f"unknown window: {self.window!r}")


@dataclass
class FeatureImage:
    """Two-channel R x C image: log-power spectrogram and phase."""

    log_power: np.ndarray
    phase: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_power.shape

    def channels(self) -> np.ndarray:
        """Stack as a (2, R, C) array, log power first."""
        return np.stack([self.log_power, self.phase])


def hanning_window(n: int) -> np.ndarray:
    """Periodic Hanning window w[k] = 0.5*(1 - cos(2*pi*k/n)); sums to n/2."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _as_complex(x) -> np.ndarray:
    if isinstance(x, (FloatIq, IqSeries)):
        return x.to_complex()
    arr = np.asarray(x)
    if not np.iscomplexobj(arr):
        raise ShapeError("input must be complex or an IQ series")
    return arr.astype(np.complex128, copy=False)


def make_features(x, cfg: SpectroConfig = SpectroConfig()) -> FeatureImage:
    """Transform a complex series (or IQ container) into a FeatureImage."""
    z = _as_complex(x)
    if z.ndim != 1 or z.size != cfg.rows * cfg.cols:
        raise ShapeError(
            f"series length {z.size} does not match {cfg.rows}x{cfg.cols}"
        )
    grid = z.reshape(cfg.rows, cfg.cols)
    if cfg.window == "hanning":
        grid = grid * hanning_window(cfg.cols)
    spec = np.fft.fft(grid, axis=1)
    if cfg.fftshift:
        spec = np.fft.fftshift(spec, axes=1)
    log_power = np.log(spec.real**2 + spec.imag**2 + cfg.epsilon)
    phase = np.angle(spec)
    # np.angle returns [-pi, pi]; fold the closed lower edge onto +pi.
    phase[phase == -np.pi] = np.pi
    return FeatureImage(log_power=log_power, phase=phase)


def normalize(img: FeatureImage) -> FeatureImage:
    """Standardize each channel to zero mean, unit std (std floor 1e-6)."""

    def std1(ch: np.ndarray) -> np.ndarray:
        centered = ch - ch.mean()
        return centered / max(centered.std(), 1e-6)

    return FeatureImage(log_power=std1(img.log_power), phase=std1(img.phase))


def downsample(img: FeatureImage, out_h: int, out_w: int) -> FeatureImage:
    """Block-mean pooling of both channels to out_h x out_w."""
    r, c = img.shape
    if out_h > r or out_w > c or r % out_h or c % out_w:
        raise ShapeError(f"cannot pool {r}x{c} into {out_h}x{out_w}")
    bh, bw = r // out_h, c // out_w

    def pool(ch: np.ndarray) -> np.ndarray:
        return ch.reshape(out_h, bh, out_w, bw).mean(axis=(1, 3))

    return FeatureImage(log_power=pool(img.log_power), phase=pool(img.phase))


def classifier_input(
    x,
    cfg: SpectroConfig,
    out_h: int,
    out_w: int,
    *,
    phase_channel: bool = True,
) -> np.ndarray:
    """Feature pipeline for the classifier: features -> pool -> standardize.

    Returns (2, out_h, out_w) float32, or (1, ...) without the phase channel.
    """
    img = normalize(downsample(make_features(x, cfg), out_h, out_w))
    chans = img.channels() if phase_channel else img.log_power[None]
    return chans.astype(np.float32)


def render_pgm(channel: np.ndarray, path) -> None:
    """Write one channel as an 8-bit binary PGM with min-max scaling.

    The maximum value maps to white (255); a constant image renders black.
    """
    arr = np.asarray(channel, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError("PGM rendering expects a 2-D array")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.floor((arr - lo) / (hi - lo) * 255.0 + 0.5)
    else:
        scaled = np.zeros_like(arr)
    data = scaled.astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def default_config_for_length(length: int = SIGNAL_LENGTH) -> SpectroConfig:
    """Default near-square factorization for the standard series length."""
    if length != SIGNAL_LENGTH:
        raise InvalidParameterError(
            f"no default factorization for length {length}; pass an explicit config"
        )
    return SpectroConfig()
