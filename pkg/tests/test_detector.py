"""Drift detection: line search, normalization, calibration."""

import math

import numpy as np
import pytest

from sigspec.detector import (
    best_line_sum,
    calibrate_threshold,
    drift_grid,
    drift_search,
    power_spectrogram,
    threshold_from_scores,
)
from sigspec.errors import InvalidParameterError, ShapeError
from sigspec.spectro import SpectroConfig
from sigspec.sigsim import synthesize

from helpers import make_params


def synthetic_line(rows=64, cols=128, start=10, drift=0.5, value=1.0):
    power = np.zeros((rows, cols))
    for r in range(rows):
        power[r, int(math.floor(start + drift * r + 0.5)) % cols] = value
    return power


def test_all_zero_power():
    det = drift_search(np.zeros((16, 32)), max_drift=1.0, steps=21)
    assert det.score == 0.0
    assert det.drift == 0.0
    assert det.start_bin == 0
    assert not det.detected


def test_synthetic_line_recovery():
    power = synthetic_line(start=10, drift=0.5)
    det = drift_search(power, max_drift=1.0, steps=41)  # grid step 0.05
    assert abs(det.drift - 0.5) <= 0.05
    assert abs(det.start_bin - 10) <= 1
    assert det.raw_score == 64.0  # every row contributes its unit pixel


def test_noiseless_narrowband_drift_matches_argmax_regression():
    """Grid-search drift vs an independent per-row argmax regression."""
    p = make_params(omega0=-0.5, omega1=7.324e-6, sigma=0.0)
    cfg = SpectroConfig()
    power = power_spectrogram(synthesize(p), cfg)
    steps = 161
    det = drift_search(power, max_drift=0.4, steps=steps)
    argmax = power.argmax(axis=1)
    slope = np.polyfit(np.arange(cfg.rows), argmax, 1)[0]
    grid_step = 0.8 / (steps - 1)
    assert abs(det.drift - slope) <= grid_step


def test_monotonicity_of_best_path_sum():
    """Adding nonnegative power along any line never lowers the best sum."""
    rng = np.random.default_rng(0)
    power = rng.exponential(1.0, (32, 64))
    grid = drift_grid(0.8, 17)
    before, _, _ = best_line_sum(power, grid)
    boosted = power.copy()
    for r in range(32):
        boosted[r, (5 + int(0.25 * r)) % 64] += rng.uniform(0, 3)
    after, _, _ = best_line_sum(boosted, grid)
    assert after >= before


def test_row_shuffle_destroys_line_score():
    power = synthetic_line() + 0.01
    det = drift_search(power, 1.0, 41)
    rng = np.random.default_rng(4)
    shuffled = power[rng.permutation(64)]
    det_shuffled = drift_search(shuffled, 1.0, 41)
    assert det_shuffled.score <= 0.5 * det.score


def test_drift_grid():
    assert drift_grid(0.5, 1).tolist() == [0.0]
    g = drift_grid(0.5, 5)
    np.testing.assert_allclose(g, [-0.5, -0.25, 0.0, 0.25, 0.5])
    with pytest.raises(InvalidParameterError):
        drift_grid(0.5, 0)


def test_shape_errors():
    with pytest.raises(ShapeError):
        drift_search(np.zeros((1, 5)), 0.5, 3)
    with pytest.raises(ShapeError):
        drift_search(np.zeros(10), 0.5, 3)


def test_threshold_quantiles():
    scores = np.arange(1.0, 101.0)  # 1..100
    assert threshold_from_scores(scores, 0.5) == pytest.approx(50.5)
    near_max = threshold_from_scores(scores, 1.0 / 100)
    assert 99.0 <= near_max <= 100.0
    with pytest.raises(InvalidParameterError):
        threshold_from_scores(scores, 0.0)
    with pytest.raises(InvalidParameterError):
        threshold_from_scores([], 0.5)


def test_detected_flag_uses_threshold():
    power = synthetic_line()
    det = drift_search(power, 1.0, 41, threshold=1.0)
    assert det.detected and det.threshold == 1.0
    det_hi = drift_search(power, 1.0, 41, threshold=float("inf"))
    assert not det_hi.detected


def test_calibrate_threshold_validates_records(tmp_path):
    from sigspec.dataset import CorpusSpec, generate_corpus, read_record_iq
    from sigspec.sigsim import SignalClass

    records = generate_corpus(CorpusSpec(
        counts={SignalClass.noise: 3, SignalClass.narrowband: 1},
        master_seed=5, out_dir=tmp_path))
    noise = [r for r in records if r.signal_class == SignalClass.noise]
    with pytest.raises(InvalidParameterError):
        calibrate_threshold([], tmp_path, 0.5)
    with pytest.raises(InvalidParameterError):
        calibrate_threshold(records, tmp_path, 0.5)  # mixed classes
    thr = calibrate_threshold(noise, tmp_path, 0.5, steps=21)
    scores = [
        drift_search(power_spectrogram(read_record_iq(tmp_path, r)),
                     steps=21).score
        for r in noise
    ]
    assert thr == pytest.approx(np.median(scores))
