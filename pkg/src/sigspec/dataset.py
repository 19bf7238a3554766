"""Corpus generation, persistence, and splits.

Layout: ``<out>/data/<id>.iq8`` holds raw interleaved I,Q signed 8-bit
bytes (sample-major, exactly 2*L bytes, no header); ``<out>/manifest.jsonl``
holds one JSON record per line and is the single source of truth — loaders
never scan directories.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from sigspec.errors import DataError, InvalidParameterError
from sigspec.rng import PARAMS_STREAM, derive_seed, stream
from sigspec.sigsim import (
    NOISE_SIGMA,
    IqSeries,
    SignalClass,
    SimParams,
    sample_params,
    simulate,
)

MANIFEST_NAME = "manifest.jsonl"
DATA_DIR = "data"

# A0/13.0 values of the standard amplitude sweep; several sit below the
# training amplitudes on purpose.
SWEEP_AMPLITUDES = (
    0.008, 0.01, 0.02, 0.04, 0.05, 0.06, 0.07,
    0.08, 0.09, 0.1, 0.12, 0.16, 0.2, 0.4,
)


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    signal_class: SignalClass
    params: SimParams
    file: str
    split: str
    sweep_amplitude: float | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "class": self.signal_class.name,
            "params": self.params.to_json(),
            "file": self.file,
            "split": self.split,
            "sweep_amplitude": self.sweep_amplitude,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestRecord":
        return cls(
            id=obj["id"],
            signal_class=SignalClass.from_name(obj["class"]),
            params=SimParams.from_json(obj["params"]),
            file=obj["file"],
            split=obj["split"],
            sweep_amplitude=obj["sweep_amplitude"],
        )


@dataclass(frozen=True)
class CorpusSpec:
    """What to generate: per-class counts plus reproducibility knobs."""

    counts: dict[SignalClass, int]
    master_seed: int
    out_dir: Path
    phase_mode: str = "accumulate"
    split: str = "train"
    amp_range: tuple[float, float] | None = None

    def __post_init__(self):
        for cls_, n in self.counts.items():
            if n < 0:
                raise InvalidParameterError(f"negative count for {cls_.name}")


def write_iq(series: IqSeries, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(series.to_bytes())


def read_iq(path: Path, expected_length: int | None = None) -> IqSeries:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(raw) % 2:
        raise DataError(f"{path}: odd byte count {len(raw)}")
    series = IqSeries.from_bytes(raw)
    if expected_length is not None and len(series) != expected_length:
        raise DataError(
            f"{path}: expected {expected_length} samples, found {len(series)}"
        )
    return series


def read_record_iq(root: Path, record: ManifestRecord) -> IqSeries:
    return read_iq(Path(root) / record.file, expected_length=record.params.length)


def save_manifest(records: list[ManifestRecord], path: Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")
    os.replace(tmp, path)


def load_manifest(path: Path, validate_files: bool = False) -> list[ManifestRecord]:
    path = Path(path)
    records = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(ManifestRecord.from_json(json.loads(line)))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
    if validate_files:
        root = path.parent
        for rec in records:
            f = root / rec.file
            expected = 2 * rec.params.length
            if not f.is_file() or f.stat().st_size != expected:
                raise DataError(f"{rec.id}: missing or truncated {f}")
    return records


def _item_seed(master_seed: int, signal_class: SignalClass, index: int) -> int:
    return derive_seed(master_seed, int(signal_class), index)


def _make_params(
    master_seed: int,
    signal_class: SignalClass,
    index: int,
    amp_range: tuple[float, float] | None,
    fixed_amp: float | None,
) -> SimParams:
    seed = _item_seed(master_seed, signal_class, index)
    params = sample_params(
        signal_class, stream(seed, PARAMS_STREAM), seed=seed, amp_range=amp_range
    )
    if fixed_amp is not None and signal_class != SignalClass.noise:
        params = params.with_amplitude(NOISE_SIGMA * fixed_amp)
    return params


def _render_item(args) -> bytes:
    params, phase_mode = args
    return simulate(params, phase_mode).to_bytes()


def _generate(
    items: list[ManifestRecord],
    out_dir: Path,
    phase_mode: str,
    workers: int,
) -> None:
    """Render and write every item; byte-identical regardless of workers."""
    out_dir = Path(out_dir)
    (out_dir / DATA_DIR).mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        jobs = ((rec.params, phase_mode) for rec in items)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                payloads = pool.map(_render_item, jobs, chunksize=16)
                for rec, payload in zip(items, payloads):
                    path = out_dir / rec.file
                    written.append(path)
                    path.write_bytes(payload)
        else:
            for rec in items:
                path = out_dir / rec.file
                written.append(path)
                path.write_bytes(_render_item((rec.params, phase_mode)))
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    save_manifest(items, out_dir / MANIFEST_NAME)


def generate_corpus(spec: CorpusSpec, workers: int = 1) -> list[ManifestRecord]:
    """Generate ``counts[class]`` simulations per class under ``out_dir``.

    Per-item seeds are derived from (master_seed, class, index), so a
    rerun with the same spec reproduces every file byte for byte.
    """
    records = []
    for signal_class in SignalClass:
        for index in range(spec.counts.get(signal_class, 0)):
            params = _make_params(
                spec.master_seed, signal_class, index, spec.amp_range, None
            )
            rec_id = f"{signal_class.name}-{index:06d}"
            records.append(
                ManifestRecord(
                    id=rec_id,
                    signal_class=signal_class,
                    params=params,
                    file=f"{DATA_DIR}/{rec_id}.iq8",
                    split=spec.split,
                )
            )
    _generate(records, spec.out_dir, spec.phase_mode, workers)
    return records


def generate_sweep(
    master_seed: int,
    per_class: int,
    out_dir: Path,
    amplitudes: tuple[float, ...] = SWEEP_AMPLITUDES,
    phase_mode: str = "accumulate",
    workers: int = 1,
) -> list[ManifestRecord]:
    """Fixed-amplitude test sets: per_class sims per class per amplitude.

    Every non-noise record has A0 forced to 13.0 * amplitude; all other
    parameters are sampled as usual.  Noise records keep A0 = 0.
    """
    if not amplitudes:
        raise InvalidParameterError("amplitude list must be nonempty")
    records = []
    for amp_idx, amp in enumerate(amplitudes):
        for signal_class in SignalClass:
            for j in range(per_class):
                index = amp_idx * per_class + j
                params = _make_params(master_seed, signal_class, index, None, amp)
                rec_id = f"{signal_class.name}-a{amp_idx:02d}-{j:04d}"
                records.append(
                    ManifestRecord(
                        id=rec_id,
                        signal_class=signal_class,
                        params=params,
                        file=f"{DATA_DIR}/{rec_id}.iq8",
                        split="sweep",
                        sweep_amplitude=amp,
                    )
                )
    _generate(records, out_dir, phase_mode, workers)
    return records


def kfold_split(
    records: list[ManifestRecord], k: int, seed: int
) -> list[ManifestRecord]:
    """Stratified k-fold labels: within each class, fold sizes differ by <= 1.

    Returns new records (input order preserved) with split = ``fold_i``.
    """
    if k < 2:
        raise InvalidParameterError(f"k must be >= 2, got {k}")
    by_class: dict[SignalClass, list[int]] = {}
    for pos, rec in enumerate(records):
        by_class.setdefault(rec.signal_class, []).append(pos)
    fold_of = [0] * len(records)
    for signal_class, positions in by_class.items():
        if k > len(positions):
            raise InvalidParameterError(
                f"k={k} exceeds {signal_class.name} count {len(positions)}"
            )
        order = stream(seed, int(signal_class)).permutation(len(positions))
        for rank, idx in enumerate(order):
            fold_of[positions[idx]] = rank % k
    return [
        replace(rec, split=f"fold_{fold_of[pos]}") for pos, rec in enumerate(records)
    ]
