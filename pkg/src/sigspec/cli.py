"""Command-line interface.

Subcommands: generate, render, train, eval, sweep, detect.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure.  A plain-text
config file (key = value, flag names with dashes or underscores) can
seed defaults; explicit flags win.  Every run writes its effective
configuration, seeds included, into the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from sigspec import __version__
from sigspec.errors import (
    DataError,
    InvalidParameterError,
    NumericError,
    ShapeError,
)
from sigspec.rng import derive_seed
from sigspec.sigsim import CLASS_NAMES, SignalClass
from sigspec import dataset, detector, metrics, spectro
from sigspec.classifier import (
    Ensemble,
    TrainConfig,
    WrnConfig,
    load_weights,
    predict_proba,
    save_weights,
    train as train_model,
)
from sigspec.classifier.train import load_features, save_history

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _read_config_file(path: Path) -> dict:
    """key = value lines; '#' starts a comment; keys normalized to dests."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _record_run(args: argparse.Namespace, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": __version__,
        "command": args.command,
        "config": {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in sorted(vars(args).items())
            if k not in ("command", "func")
        },
    }
    (out_dir / f"run_{args.command}.json").write_text(
        json.dumps(payload, indent=2), encoding="utf-8"
    )


def _parse_classes(spec: str | None) -> list[SignalClass]:
    if not spec:
        return list(SignalClass)
    return [SignalClass.from_name(name.strip()) for name in spec.split(",")]


def _spectro_config(args) -> spectro.SpectroConfig:
    return spectro.SpectroConfig(
        rows=args.rows, cols=args.cols,
        window="none" if args.no_window else "hanning",
        fftshift=not args.no_fftshift,
    )


def _add_spectro_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rows", type=int, default=spectro.DEFAULT_ROWS,
                   help="spectrogram rows (time slices)")
    p.add_argument("--cols", type=int, default=spectro.DEFAULT_COLS,
                   help="spectrogram columns (frequency bins)")
    p.add_argument("--no-window", action="store_true",
                   help="disable the Hanning window")
    p.add_argument("--no-fftshift", action="store_true",
                   help="keep frequency 0 at bin 0")


def cmd_generate(args) -> int:
    out = Path(args.out)
    if args.sweep:
        amplitudes = (
            tuple(float(a) for a in args.amplitudes.split(","))
            if args.amplitudes else dataset.SWEEP_AMPLITUDES
        )
        records = dataset.generate_sweep(
            args.seed, args.per_class, out, amplitudes,
            phase_mode=args.phase_mode, workers=args.threads,
        )
    else:
        if args.count_per_class is None:
            raise InvalidParameterError("--count-per-class is required without --sweep")
        counts = {c: args.count_per_class for c in _parse_classes(args.classes)}
        amp_range = None
        if args.amp_range:
            lo, hi = (float(v) for v in args.amp_range.split(","))
            amp_range = (lo, hi)
        records = dataset.generate_corpus(
            dataset.CorpusSpec(
                counts=counts, master_seed=args.seed, out_dir=out,
                phase_mode=args.phase_mode, split=args.split,
                amp_range=amp_range,
            ),
            workers=args.threads,
        )
        if args.folds:
            records = dataset.kfold_split(records, args.folds, args.seed)
            dataset.save_manifest(records, out / dataset.MANIFEST_NAME)
    _record_run(args, out)
    print(f"wrote {len(records)} records under {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    series = dataset.read_iq(Path(args.infile))
    cfg = _spectro_config(args)
    if len(series) != cfg.rows * cfg.cols:
        raise DataError(
            f"{args.infile}: {len(series)} samples do not fill {cfg.rows}x{cfg.cols}"
        )
    img = spectro.make_features(series, cfg)
    channel = img.log_power if args.channel == "power" else img.phase
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    spectro.render_pgm(channel, out)
    _record_run(args, out.parent)
    print(f"wrote {out}")
    return EXIT_OK


def _load_fold_records(args):
    records = dataset.load_manifest(Path(args.manifest))
    if not any(rec.split.startswith("fold_") for rec in records):
        records = dataset.kfold_split(records, args.folds, args.seed)
    return records


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = _load_fold_records(args)
    root = Path(args.manifest).parent
    wrn_cfg = WrnConfig(
        depth=args.depth, widen=args.widen, dropout=args.dropout,
        in_channels=1 if args.no_phase else 2, classes=len(CLASS_NAMES),
        input_h=args.input_h, input_w=args.input_w,
    )
    spectro_cfg = _spectro_config(args)
    n_members = args.ensemble
    if n_members < 1:
        raise InvalidParameterError("--ensemble must be >= 1")
    for member in range(n_members):
        val_fold = f"fold_{member}"
        train_records = [r for r in records if r.split != val_fold]
        val_records = [r for r in records if r.split == val_fold]
        train_cfg = TrainConfig(
            lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
            batch_size=args.batch_size, epochs=args.epochs,
            seed=derive_seed(args.seed, member),
        )
        model, history = train_model(
            train_records, val_records, root, wrn_cfg, train_cfg, spectro_cfg,
            progress=lambda row: print(
                f"member {member} epoch {row['epoch']}: "
                f"loss {row['train_loss']:.4f} val {row['val_acc']:.4f}"),
        )
        save_weights(model, out / f"member_{member}.wrn")
        save_history(history, out / f"history_{member}.csv")
        print(f"member {member}: best val_acc "
              f"{max(h['val_acc'] for h in history):.4f}")
    _record_run(args, out)
    return EXIT_OK


def _load_predictor(weight_paths: list[str]):
    models = [load_weights(Path(p)) for p in weight_paths]
    return models[0] if len(models) == 1 else Ensemble(models)


def _predictions_from_csv(path: Path) -> tuple[list[int], list[int]]:
    import csv as _csv

    predicted, actual = [], []
    with open(path, newline="") as fh:
        for row in _csv.DictReader(fh):
            try:
                predicted.append(int(SignalClass.from_name(row["predicted"].strip())))
                actual.append(int(SignalClass.from_name(row["actual"].strip())))
            except (KeyError, InvalidParameterError) as exc:
                raise DataError(f"{path}: bad prediction row {row}: {exc}") from exc
    if not predicted:
        raise DataError(f"{path}: no prediction rows")
    return predicted, actual


def cmd_eval(args) -> int:
    if bool(args.pred) == bool(args.weights):
        raise InvalidParameterError("pass exactly one of --pred or --weights")
    if args.pred:
        predicted, actual = _predictions_from_csv(Path(args.pred))
    else:
        predictor = _load_predictor(args.weights)
        records = dataset.load_manifest(Path(args.manifest))
        if args.split:
            records = [r for r in records if r.split == args.split]
        if not records:
            raise DataError("no records selected for evaluation")
        cfg = predictor.cfg
        x, y = load_features(
            records, Path(args.manifest).parent, _spectro_config(args),
            cfg.input_h, cfg.input_w, phase_channel=cfg.in_channels == 2,
        )
        predicted = predict_proba(predictor, x).argmax(axis=1).tolist()
        actual = y.tolist()
    rep = metrics.report(metrics.confusion(predicted, actual))
    print(metrics.report_table(rep))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        metrics.write_text(metrics.report_csv(rep), out / "report.csv")
        _record_run(args, out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    predictor = _load_predictor(args.weights)
    records = dataset.load_manifest(Path(args.manifest))
    rep = metrics.sweep_eval(
        predictor, records, Path(args.manifest).parent, _spectro_config(args))
    csv_text = metrics.sweep_csv(rep)
    print(csv_text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        metrics.write_text(csv_text, out / "sweep.csv")
        _record_run(args, out)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _spectro_config(args)
    threshold = args.threshold
    if args.calibrate_far is not None:
        if not args.noise_manifest:
            raise InvalidParameterError("--calibrate-far requires --noise-manifest")
        noise_records = dataset.load_manifest(Path(args.noise_manifest))
        threshold = detector.calibrate_threshold(
            noise_records, Path(args.noise_manifest).parent, args.calibrate_far,
            cfg, args.max_drift, args.steps,
        )
        print(f"# calibrated threshold {threshold:.6f}", file=sys.stderr)

    if args.infile:
        inputs = [(Path(args.infile).stem, dataset.read_iq(Path(args.infile)))]
    elif args.manifest:
        records = dataset.load_manifest(Path(args.manifest))
        root = Path(args.manifest).parent
        inputs = [(rec.id, dataset.read_record_iq(root, rec)) for rec in records]
    else:
        raise InvalidParameterError("pass --in or --manifest")

    lines = []
    for rec_id, series in inputs:
        det = detector.drift_search(
            detector.power_spectrogram(series, cfg),
            args.max_drift, args.steps, threshold,
        )
        lines.append(json.dumps({
            "id": rec_id,
            "score": det.score,
            "drift": det.drift,
            "start_bin": det.start_bin,
            "detected": det.detected,
        }))
    print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "detections.jsonl").write_text("\n".join(lines) + "\n")
        _record_run(args, out)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="sigspec", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[], help="generate a corpus or sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--count-per-class", type=int, help="corpus size per class")
    p.add_argument("--classes", help="comma-separated class subset")
    p.add_argument("--split", default="train", help="split label for the corpus")
    p.add_argument("--amp-range", help="override A0/13 range as LO,HI")
    p.add_argument("--folds", type=int, help="apply a stratified k-fold split")
    p.add_argument("--sweep", action="store_true", help="generate amplitude sweep sets")
    p.add_argument("--per-class", type=int, default=250,
                   help="sweep simulations per class per amplitude")
    p.add_argument("--amplitudes", help="comma-separated sweep amplitudes (A0/13)")
    p.add_argument("--phase-mode", choices=("accumulate", "literal"),
                   default="accumulate")
    p.add_argument("--threads", type=int, default=1, help="generation workers")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("render", help="render an IQ file as a PGM image")
    p.add_argument("--in", dest="infile", required=True, help="input .iq8 file")
    p.add_argument("--channel", choices=("power", "phase"), default="power")
    p.add_argument("--out", required=True, help="output .pgm file")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("train", help="train a classifier or k-fold ensemble")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for weights")
    p.add_argument("--ensemble", type=int, default=1,
                   help="members to train, one per validation fold")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--widen", type=int, default=1)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--input-h", type=int, default=96)
    p.add_argument("--input-w", type=int, default=128)
    p.add_argument("--no-phase", action="store_true",
                   help="train on the log-power channel only")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictions or weights")
    p.add_argument("--pred", help="CSV with predicted,actual class names")
    p.add_argument("--weights", nargs="+", help="weight files (several = ensemble)")
    p.add_argument("--manifest", help="manifest to evaluate (with --weights)")
    p.add_argument("--split", help="restrict to one split label")
    p.add_argument("--out", help="output directory for report.csv")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="amplitude-sweep evaluation")
    p.add_argument("--weights", nargs="+", required=True)
    p.add_argument("--manifest", required=True, help="sweep manifest")
    p.add_argument("--out", help="output directory for sweep.csv")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("detect", help="linear-drift detection")
    p.add_argument("--in", dest="infile", help="single .iq8 file")
    p.add_argument("--manifest", help="manifest of inputs")
    p.add_argument("--max-drift", type=float, default=detector.DEFAULT_MAX_DRIFT)
    p.add_argument("--steps", type=int, default=detector.DEFAULT_STEPS)
    p.add_argument("--threshold", type=float, help="detection threshold")
    p.add_argument("--calibrate-far", type=float,
                   help="calibrate threshold at this false-alarm rate")
    p.add_argument("--noise-manifest", help="noise-only manifest for calibration")
    p.add_argument("--out", help="output directory for detections.jsonl")
    _add_spectro_flags(p)
    p.set_defaults(func=cmd_detect)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    # Apply config-file defaults before the real parse; flags win.
    config_values = {}
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            print("error: --config requires a path", file=sys.stderr)
            return EXIT_USAGE
        try:
            config_values = _read_config_file(Path(argv[idx + 1]))
        except DataError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        del argv[idx:idx + 2]

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        ns = vars(args)
        for key, raw in config_values.items():
            if key not in ns or key in ("func", "command"):
                raise _UsageError(f"unknown config key for {ns.get('command')}: {key}")
            if f"--{key.replace('_', '-')}" in argv:
                continue  # explicit flags win
            ns[key] = _coerce(raw, ns[key])
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _coerce(raw: str, current):
    """Coerce a config-file string to the type of the flag's current value."""
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:
        for cast in (int, float):
            try:
                return cast(raw)
            except ValueError:
                continue
    return raw


if __name__ == "__main__":
    sys.exit(main())
