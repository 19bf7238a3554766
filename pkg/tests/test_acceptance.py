"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them
live).  The desk-scale training criterion and the amplitude sweep share
one trained model through session fixtures, so the full gate runs the
training exactly once.
"""

import contextlib
import math
import time

import numpy as np
import pytest
from scipy import stats

from sigspec import dataset, detector, metrics, sigsim, spectro
from sigspec.classifier import (
    TrainConfig,
    WrnConfig,
    build,
    fit,
    load_weights,
    param_count,
    predict_proba,
    save_weights,
)
from sigspec.classifier.gradcheck import check_gradients
from sigspec.classifier.train import accuracy, load_features
from sigspec.rng import stream
from sigspec.sigsim import SignalClass

from helpers import make_params, rank_auc, spearman
from test_metrics import published_matrix_in_class_order

pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(num: int, name: str):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {num:02d} {name}: FAIL ({time.time()-start:.1f}s)")
        raise
    print(f"\nACCEPTANCE {num:02d} {name}: PASS ({time.time()-start:.1f}s)")


def test_01_metric_oracle_reproduces_published_scores():
    """Published confusion counts -> published precision/recall/F1, < 1 s."""
    with criterion(1, "metric-oracle"):
        t0 = time.time()
        rep = metrics.report(published_matrix_in_class_order())
        expected = {
            "brightpixel": (0.991, 0.857, 0.919),
            "narrowband": (0.994, 0.944, 0.968),
            "narrowbanddrd": (0.969, 0.977, 0.973),
            "noise": (0.785, 0.995, 0.877),
            "squarepulsednarrowband": (0.975, 0.925, 0.949),
            "squiggle": (1.000, 0.997, 0.998),
            "squigglesquarepulsednarrowband": (1.000, 0.970, 0.984),
        }
        for name, (precision, recall, f1) in expected.items():
            sc = rep.per_class[name]
            assert abs(sc.precision - precision) <= 0.001
            assert abs(sc.recall - recall) <= 0.001
            assert abs(sc.f1 - f1) <= 0.001
        assert time.time() - t0 < 1.0


def test_02_noise_statistics():
    """1e6 pre-quantization noise components: mean, width, KS at 1%."""
    with criterion(2, "noise-statistics"):
        parts = []
        for seed in (1001, 1002, 1003):
            p = make_params(signal_class=SignalClass.noise, a0=0.0, seed=seed)
            x = sigsim.synthesize(p)
            parts += [x.re, x.im]
        sample = np.concatenate(parts)[:1_000_000]
        assert len(sample) == 1_000_000
        assert abs(sample.mean()) < 0.05
        assert 12.9 <= sample.std() <= 13.1
        d_stat = stats.kstest(sample, "norm", args=(0.0, 13.0)).statistic
        assert d_stat < 1.628 / math.sqrt(len(sample))  # 1% critical value


def test_03_tone_and_drift_localization():
    """Bin-centered tone hits the exact bin; drift slope is analytic."""
    with criterion(3, "tone-drift-localization"):
        cfg = spectro.SpectroConfig(window="none")
        k = 64
        p = make_params(omega0=2 * math.pi * k / cfg.cols, sigma=0.0)
        img = spectro.make_features(sigsim.synthesize(p), cfg)
        argmax = np.exp(img.log_power).argmax(axis=1)
        assert np.all(argmax == cfg.cols // 2 + k)

        cfg = spectro.SpectroConfig()
        p = make_params(omega0=-0.5, omega1=7.324e-6, sigma=0.0)
        img = spectro.make_features(sigsim.synthesize(p), cfg)
        argmax = np.exp(img.log_power).argmax(axis=1)
        slope = np.polyfit(np.arange(cfg.rows), argmax, 1)[0]
        analytic = p.omega1 * cfg.cols**2 / (2 * math.pi)
        assert abs(slope - analytic) < 1.0


def test_04_alias_latch_and_duty_cycle():
    with criterion(4, "alias-latch-duty-cycle"):
        p = make_params(omega0=0.99 * math.pi, omega1=1e-6, sigma=0.0)
        omega = sigsim.frequency_trajectory(p, stream(0))
        t_star = int(np.argmax(omega > math.pi))
        z = sigsim.synthesize(p)
        mag = np.hypot(z.re, z.im)
        assert np.all(mag[t_star:] == 0.0)
        assert np.all(mag[:t_star] > 0.0)

        length = sigsim.SIGNAL_LENGTH
        for duty, period, phi_w in [(0.25, float(length), 0.07 * length),
                                    (0.6, 30_000.0, 20_000.0)]:
            w = sigsim.square_wave(np.arange(length), period, duty, phi_w)
            full_periods = int(length // period)
            span = int(full_periods * period)
            on_fraction = w[:span].mean()
            assert abs(on_fraction - duty) <= 1.0 / period


def test_05_gradient_check_every_weight():
    """Every gradient of a dropout-free b=1,k=1 model vs central FD."""
    with criterion(5, "gradient-check"):
        t0 = time.time()
        cfg = WrnConfig(depth=10, widen=1, dropout=0.0, in_channels=2,
                        classes=7, input_h=8, input_w=8)
        model = build(cfg, seed=3).astype(np.float64)
        x = stream(21).normal(size=(1, 2, 8, 8))
        labels = np.array([0])
        errors = check_gradients(model, x, labels, h=1e-5)
        named = model.named_params()
        assert sum(named[n].size for n in errors) == 77_511  # every weight
        worst = max(errors.values())
        assert worst < 1e-4, f"worst relative error {worst:.3e}"
        assert time.time() - t0 < 60.0


# ---------------------------------------------------------------------------
# Desk-scale training (shared by criteria 6 and 7)

TRAIN_PER_CLASS = 500
VAL_PER_CLASS = 100
TRAIN_SEED = 1000
SPECTRO_CFG = spectro.SpectroConfig()
WRN_CFG = WrnConfig(depth=10, widen=1, dropout=0.3, in_channels=2,
                    classes=7, input_h=96, input_w=128)
TRAIN_CFG = TrainConfig(lr=0.05, momentum=0.9, weight_decay=5e-4,
                        batch_size=32, epochs=24, seed=0)


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_corpus")
    spec = dataset.CorpusSpec(
        counts={c: TRAIN_PER_CLASS + VAL_PER_CLASS for c in SignalClass},
        master_seed=TRAIN_SEED, out_dir=out, amp_range=(0.1, 0.4),
    )
    records = dataset.generate_corpus(spec)
    return out, records


@pytest.fixture(scope="session")
def desk_model(desk_corpus):
    out, records = desk_corpus
    by_class = {}
    for rec in records:
        by_class.setdefault(rec.signal_class, []).append(rec)
    train_recs, val_recs = [], []
    for recs in by_class.values():
        train_recs += recs[:TRAIN_PER_CLASS]
        val_recs += recs[TRAIN_PER_CLASS:]
    t0 = time.time()
    x_train, y_train = load_features(train_recs, out, SPECTRO_CFG, 96, 128)
    x_val, y_val = load_features(val_recs, out, SPECTRO_CFG, 96, 128)
    model = build(WRN_CFG, TRAIN_CFG.seed)
    model, history = fit(
        model, x_train, y_train, x_val, y_val, TRAIN_CFG,
        progress=lambda row: print(
            f"  epoch {row['epoch']}: loss {row['train_loss']:.4f} "
            f"val {row['val_acc']:.4f}", flush=True),
    )
    elapsed = time.time() - t0
    best_val = max(h["val_acc"] for h in history)
    return model, best_val, elapsed, (x_val, y_val)


def test_06_desk_scale_training(desk_model, tmp_path):
    """WRN-10-1, 500/100 per class at A/13 in [0.1, 0.4]: >= 80% val."""
    with criterion(6, "desk-scale-training"):
        model, best_val, elapsed, (x_val, y_val) = desk_model
        assert elapsed < 7200.0, f"training took {elapsed:.0f}s"
        assert best_val >= 0.80, f"best validation accuracy {best_val:.3f}"
        assert accuracy(model, x_val, y_val) == pytest.approx(best_val)

        # 2-class toy: noise vs bright narrowband, >= 95% within 20 epochs
        toy_cfg = WrnConfig(depth=10, widen=1, dropout=0.3, in_channels=2,
                            classes=2, input_h=64, input_w=64)

        def toy_set(n_per, seed_base):
            xs, ys = [], []
            for label, cls in enumerate((SignalClass.noise,
                                         SignalClass.narrowband)):
                for j in range(n_per):
                    seed = seed_base + 10_000 * label + j
                    p = sigsim.sample_params(
                        cls, stream(seed, 0), seed=seed)
                    if cls is SignalClass.narrowband:
                        p = p.with_amplitude(13.0 * 0.4)
                    xs.append(spectro.classifier_input(
                        sigsim.simulate(p), SPECTRO_CFG, 64, 64))
                    ys.append(label)
            return np.stack(xs), np.array(ys)

        x_tr, y_tr = toy_set(200, 50_000)
        x_va, y_va = toy_set(50, 90_000)
        toy = build(toy_cfg, seed=0)
        toy, history = fit(
            toy, x_tr, y_tr, x_va, y_va,
            TrainConfig(lr=0.05, epochs=10, batch_size=32, seed=0))
        assert len(history) <= 20
        assert max(h["val_acc"] for h in history) >= 0.95


def test_07_amplitude_sweep_reproduction(desk_model, tmp_path_factory):
    """Sweep behavior: monotone accuracy, dim->noise, F1 onset order."""
    with criterion(7, "amplitude-sweep"):
        model = desk_model[0]
        out = tmp_path_factory.mktemp("sweep_corpus")
        records = dataset.generate_sweep(2000, per_class=50, out_dir=out)
        rep = metrics.sweep_eval(model, records, out, SPECTRO_CFG)
        amplitudes = [p.amplitude for p in rep.points]
        assert amplitudes == sorted(amplitudes) and len(amplitudes) == 14

        accs = [p.accuracy for p in rep.points]
        rho = spearman(amplitudes, accs)
        assert rho >= 0.9, f"Spearman(amplitude, accuracy) = {rho:.3f}"

        dimmest = rep.points[0]
        assert dimmest.amplitude == 0.008
        assert dimmest.fraction_noise >= 0.8, (
            f"only {dimmest.fraction_noise:.2f} of dim signals -> noise")

        def onset(name, threshold=0.5):
            for point in rep.points:
                if point.f1[name] > threshold:
                    return point.amplitude
            return float("inf")

        nb = onset("narrowband")
        sq = onset("squarepulsednarrowband")
        bp = onset("brightpixel")
        assert nb <= sq <= bp, f"onsets nb={nb} sqpnb={sq} bp={bp}"


def test_08_detector_power_and_calibration(tmp_path_factory):
    """AUC >= 0.95 at A/13 = 0.2 and calibrated FAR within binomial 3 sigma."""
    with criterion(8, "detector"):
        out = tmp_path_factory.mktemp("detector_corpus")
        records = dataset.generate_corpus(dataset.CorpusSpec(
            counts={SignalClass.narrowband: 200, SignalClass.noise: 400},
            master_seed=4000, out_dir=out, amp_range=(0.2, 0.2),
        ))
        nb = [r for r in records if r.signal_class == SignalClass.narrowband]
        noise = [r for r in records if r.signal_class == SignalClass.noise]

        def score(rec):
            power = detector.power_spectrogram(
                dataset.read_record_iq(out, rec), SPECTRO_CFG)
            return detector.drift_search(power).score

        nb_scores = [score(r) for r in nb]
        cal_scores = [score(r) for r in noise[:200]]
        fresh_scores = [score(r) for r in noise[200:]]

        auc = rank_auc(nb_scores, cal_scores)
        assert auc >= 0.95, f"ROC AUC {auc:.3f}"

        target_far = 0.2
        thr = detector.threshold_from_scores(cal_scores, target_far)
        fired = sum(s > thr for s in fresh_scores)
        n = len(fresh_scores)
        sigma = math.sqrt(n * target_far * (1 - target_far))
        assert abs(fired - n * target_far) <= 3 * sigma, (
            f"{fired} alarms vs expected {n * target_far:.0f} +/- {3*sigma:.0f}")


def test_09_determinism(tmp_path):
    """Byte-identical corpus regeneration; bit-identical reloaded logits."""
    with criterion(9, "determinism"):
        import hashlib

        def gen(where):
            spec = dataset.CorpusSpec(
                counts={c: 2 for c in SignalClass}, master_seed=123,
                out_dir=where)
            dataset.generate_corpus(spec)
            h = hashlib.sha256()
            for path in sorted(where.rglob("*")):
                if path.is_file():
                    h.update(path.name.encode() + path.read_bytes())
            return h.hexdigest()

        assert gen(tmp_path / "a") == gen(tmp_path / "b")

        cfg = WrnConfig(depth=10, widen=1, dropout=0.0, in_channels=2,
                        classes=7, input_h=16, input_w=16)
        model = build(cfg, seed=5)
        x = stream(6).normal(size=(4, 2, 16, 16)).astype(np.float32)
        save_weights(model, tmp_path / "m.wrn")
        reloaded = load_weights(tmp_path / "m.wrn")
        np.testing.assert_array_equal(
            model.forward(x, "eval"), reloaded.forward(x, "eval"))


def test_10_wrn_34_2_constructible():
    """build(depth=34, widen=2) and parameter count within 10% of 1.9M."""
    with criterion(10, "wrn-34-2"):
        model = build(WrnConfig(depth=34, widen=2), seed=0)
        count = param_count(model)
        assert abs(count - 1_900_000) / 1_900_000 < 0.10, f"{count} params"
        logits = model.forward(
            np.zeros((1, 2, 96, 128), np.float32), "eval")
        assert logits.shape == (1, 7) and np.all(np.isfinite(logits))
