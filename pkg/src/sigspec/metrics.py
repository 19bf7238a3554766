"""Classification metrics and experiment reports.

Class order everywhere is the SignalClass code order (alphabetical).
Zero-denominator precision/recall/F1 are defined as 0; the macro F1 is
the unweighted mean over all seven classes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sigspec.errors import DataError, ShapeError
from sigspec.sigsim import CLASS_NAMES, SignalClass

N_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[actual][predicted], class order fixed by SignalClass codes."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (N_CLASSES, N_CLASSES):
            raise ShapeError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}")
        if (c < 0).any():
            raise ShapeError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassScores:
    n: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassReport:
    per_class: dict[str, ClassScores]
    macro_f1: float
    accuracy: float


@dataclass(frozen=True)
class SweepPoint:
    amplitude: float
    loss: float
    accuracy: float
    f1: dict[str, float]
    fraction_noise: float  # non-noise signals predicted as noise


@dataclass(frozen=True)
class SweepReport:
    points: list[SweepPoint]

    def __post_init__(self):
        amps = [p.amplitude for p in self.points]
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ShapeError("sweep amplitudes must be strictly increasing")


def confusion(predicted, actual) -> ConfusionMatrix:
    """Count (actual, predicted) pairs into a 7x7 matrix."""
    pred = np.asarray([int(p) for p in predicted], dtype=np.int64)
    act = np.asarray([int(a) for a in actual], dtype=np.int64)
    if pred.shape != act.shape:
        raise ShapeError("predicted and actual lengths differ")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (act, pred), 1)
    return ConfusionMatrix(counts)


def report(cm: ConfusionMatrix) -> ClassReport:
    """Per-class precision/recall/F1 plus macro F1 and overall accuracy."""
    counts = cm.counts
    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)
    per_class = {}
    f1s = []
    for c in range(N_CLASSES):
        tp = counts[c, c]
        precision = tp / col_sums[c] if col_sums[c] else 0.0
        recall = tp / row_sums[c] if row_sums[c] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[CLASS_NAMES[c]] = ClassScores(
            n=int(row_sums[c]), precision=float(precision),
            recall=float(recall), f1=float(f1),
        )
        f1s.append(f1)
    total = counts.sum()
    accuracy = float(np.trace(counts) / total) if total else 0.0
    return ClassReport(per_class=per_class, macro_f1=float(np.mean(f1s)),
                       accuracy=accuracy)


def sweep_eval(predictor, records, root: Path,
               spectro_cfg=None, batch_size: int = 64) -> SweepReport:
    """Evaluate on a fixed-amplitude sweep manifest, one point per amplitude.

    Per amplitude: mean cross-entropy of the predicted probabilities,
    accuracy, per-class F1, and the fraction of non-noise signals
    predicted as noise.
    """
    from sigspec.classifier.train import load_features, predict_proba
    from sigspec.classifier.wrn import WrnModel
    from sigspec.classifier.train import Ensemble
    from sigspec.spectro import SpectroConfig

    if spectro_cfg is None:
        spectro_cfg = SpectroConfig()
    if any(rec.sweep_amplitude is None for rec in records):
        raise DataError("sweep manifest records must carry amplitude tags")

    if isinstance(predictor, Ensemble):
        cfg = predictor.cfg
    elif isinstance(predictor, WrnModel):
        cfg = predictor.cfg
    else:
        cfg = None  # callable predictor: features at spectro resolution

    by_amp: dict[float, list] = {}
    for rec in records:
        by_amp.setdefault(rec.sweep_amplitude, []).append(rec)

    noise_code = int(SignalClass.noise)
    points = []
    for amp in sorted(by_amp):
        subset = by_amp[amp]
        if cfg is not None:
            x, y = load_features(subset, root, spectro_cfg,
                                 cfg.input_h, cfg.input_w,
                                 phase_channel=cfg.in_channels == 2)
        else:
            x, y = load_features(subset, root, spectro_cfg,
                                 spectro_cfg.rows, spectro_cfg.cols)
        probs = predict_proba(predictor, x, batch_size)
        eps = 1e-12
        loss = float(-np.log(probs[np.arange(len(y)), y] + eps).mean())
        pred = probs.argmax(axis=1)
        rep = report(confusion(pred, y))
        non_noise = y != noise_code
        fraction_noise = (
            float((pred[non_noise] == noise_code).mean()) if non_noise.any() else 0.0
        )
        points.append(SweepPoint(
            amplitude=float(amp),
            loss=loss,
            accuracy=rep.accuracy,
            f1={name: rep.per_class[name].f1 for name in CLASS_NAMES},
            fraction_noise=fraction_noise,
        ))
    return SweepReport(points=points)


def report_csv(rep: ClassReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "N", "precision", "recall", "f1"])
    for name, sc in rep.per_class.items():
        writer.writerow([name, sc.n, f"{sc.precision:.6f}",
                         f"{sc.recall:.6f}", f"{sc.f1:.6f}"])
    writer.writerow(["macro_f1", "", "", "", f"{rep.macro_f1:.6f}"])
    writer.writerow(["accuracy", "", "", "", f"{rep.accuracy:.6f}"])
    return buf.getvalue()


def report_table(rep: ClassReport) -> str:
    width = max(len(n) for n in CLASS_NAMES)
    lines = [f"{'class':<{width}}  {'N':>6}  {'prec':>6}  {'recall':>6}  {'F1':>6}"]
    for name, sc in rep.per_class.items():
        lines.append(
            f"{name:<{width}}  {sc.n:>6}  {sc.precision:>6.3f}  "
            f"{sc.recall:>6.3f}  {sc.f1:>6.3f}"
        )
    lines.append(f"macro F1 {rep.macro_f1:.4f}   accuracy {rep.accuracy:.4f}")
    return "\n".join(lines)


def sweep_csv(rep: SweepReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["amplitude", "loss", "accuracy"]
                    + [f"f1_{name}" for name in CLASS_NAMES])
    for p in rep.points:
        writer.writerow(
            [f"{p.amplitude:g}", f"{p.loss:.6f}", f"{p.accuracy:.6f}"]
            + [f"{p.f1[name]:.6f}" for name in CLASS_NAMES]
        )
    return buf.getvalue()


def write_text(text: str, path: Path) -> None:
    Path(path).write_text(text, encoding="utf-8")
