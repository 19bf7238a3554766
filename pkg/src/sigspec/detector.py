"""Linear-drift detection over power spectrograms.

A brute-force search over drift hypotheses: for each drift d (bins per
row) and start bin s, sum the power along the wrapped line
``col(r) = round(s + d*r) mod C`` and keep the best.  Wrap-around
indexing matches the circular frequency axis of an fftshifted
spectrogram.  Scores are reported in noise-normalized units so a single
threshold transfers across spectrograms.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sigspec.errors import InvalidParameterError, ShapeError
from sigspec.sigsim import SignalClass
from sigspec.spectro import SpectroConfig, make_features

DEFAULT_MAX_DRIFT = 0.4   # bins per row; covers the tabulated drift rates
DEFAULT_STEPS = 161

_SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class DriftDetection:
    score: float        # summed normalized power along the best path
    start_bin: int
    drift: float        # bins per row
    detected: bool
    threshold: float | None
    raw_score: float    # unnormalized best path sum


def drift_grid(max_drift: float, steps: int) -> np.ndarray:
    """Uniform grid of drift hypotheses; a single step degenerates to {0}."""
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    if steps == 1:
        return np.zeros(1)
    return np.linspace(-max_drift, max_drift, steps)


def best_line_sum(power: np.ndarray, drifts: np.ndarray) -> tuple[float, int, float]:
    """Max path sum over (start, drift); ties prefer small |drift|, then
    small start, then small signed drift."""
    rows = np.arange(power.shape[0])[:, None]
    starts = np.arange(power.shape[1])[None, :]
    best: tuple[float, int, float] | None = None
    best_key: tuple | None = None
    for d in drifts:
        offsets = np.floor(d * rows + 0.5).astype(np.int64)
        cols = (starts + offsets) % power.shape[1]
        sums = np.take_along_axis(power, cols, axis=1).sum(axis=0)
        s = int(np.argmax(sums))
        val = float(sums[s])
        key = (-val, abs(d), s, d)
        if best_key is None or key < best_key:
            best_key = key
            best = (val, s, float(d))
    assert best is not None
    return best


def drift_search(
    power: np.ndarray,
    max_drift: float = DEFAULT_MAX_DRIFT,
    steps: int = DEFAULT_STEPS,
    threshold: float | None = None,
) -> DriftDetection:
    """Best drifting line in a power spectrogram.

    The normalized score is the path sum of (power - m) / v, where m and
    v are the per-pixel median level and spread estimated from the row
    sums (median and median absolute deviation over C bins), clamped at
    zero.
    """
    power = np.asarray(power, dtype=np.float64)
    if power.ndim != 2 or power.shape[0] < 2 or power.shape[1] < 2:
        raise ShapeError(f"power spectrogram must be at least 2x2, got {power.shape}")
    n_rows, n_cols = power.shape

    raw, start, drift = best_line_sum(power, drift_grid(max_drift, steps))

    row_sums = power.sum(axis=1)
    med = float(np.median(row_sums)) / n_cols
    mad = float(np.median(np.abs(row_sums - np.median(row_sums)))) / n_cols
    score = (raw - n_rows * med) / max(mad, _SCALE_FLOOR)
    score = max(score, 0.0)

    return DriftDetection(
        score=score,
        start_bin=start,
        drift=drift,
        detected=(threshold is not None and score > threshold),
        threshold=threshold,
        raw_score=raw,
    )


def power_spectrogram(x, cfg: SpectroConfig = SpectroConfig()) -> np.ndarray:
    """Linear power image |X|^2 (plus the tiny log floor) for detection."""
    return np.exp(make_features(x, cfg).log_power)


def threshold_from_scores(scores, target_far: float) -> float:
    """Empirical (1 - target_far) quantile of noise-only scores."""
    if not 0.0 < target_far < 1.0:
        raise InvalidParameterError(f"target_far must be in (0, 1), got {target_far}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise InvalidParameterError("cannot calibrate on an empty score set")
    return float(np.quantile(scores, 1.0 - target_far))


def calibrate_threshold(
    noise_records,
    root: Path,
    target_far: float,
    cfg: SpectroConfig = SpectroConfig(),
    max_drift: float = DEFAULT_MAX_DRIFT,
    steps: int = DEFAULT_STEPS,
) -> float:
    """Threshold achieving the target false-alarm rate on a noise corpus.

    ``noise_records`` must be noise-class manifest records; detection on
    fresh noise then fires (score > threshold) with probability
    approximately ``target_far``.
    """
    from sigspec.dataset import read_record_iq  # local import, avoids cycle

    if not noise_records:
        raise InvalidParameterError("cannot calibrate on an empty manifest")
    if any(rec.signal_class != SignalClass.noise for rec in noise_records):
        raise InvalidParameterError("calibration manifest must be noise-only")
    scores = [
        drift_search(
            power_spectrogram(read_record_iq(root, rec), cfg), max_drift, steps
        ).score
        for rec in noise_records
    ]
    return threshold_from_scores(scores, target_far)
