"""Acceptance runs.  Each test prints one PASS/FAIL line and records it for the
end-of-session summary.  The detection and transfer runs are the slow ones
(a few minutes together on a laptop CPU).

Run standalone with ``python tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

import conftest
from trackae.anomaly import ThresholdPolicy, calibrate_threshold, classify_anomaly, threshold_from_scores
from trackae.autoencoder import ModelConfig, init_model, load_checkpoint, reconstruction_errors, save_checkpoint, train
from trackae.experiments import SOURCE_PROFILE, run_detection, run_transfer
from trackae.features import apply_norm, fit_norm_stats, stack
from trackae.geo import clip_terminal
from trackae.pipeline import prepare, score_series
from trackae.selfcheck import autoencoder_gradcheck, check_adjoint, check_conv_oracle, primitive_gradchecks
from trackae.synthgen import INJECTION_TYPES, InjectionSpec, gen_nominal, inject


def record(key, ok, detail):
    line = f"{key} {'PASS' if ok else 'FAIL'}: {detail}"
    conftest.AC_RESULTS[key] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def detection():
    return run_detection()


def nominal_training_set(n=120, seed=3):
    feats = [p.features for p in prepare(gen_nominal(SOURCE_PROFILE, n, seed), SOURCE_PROFILE.airport())
             if p.trainable]
    stats = fit_norm_stats(feats)
    return stats, stack([apply_norm(f, stats) for f in feats])


def test_ac1_gradients():
    start = time.perf_counter()
    results = primitive_gradchecks(range(5)) + [autoencoder_gradcheck(range(5))]
    elapsed = time.perf_counter() - start
    worst = max(r.max_error for r in results)
    names = ", ".join(r.name for r in results)
    record("AC-1", worst < 1e-4 and elapsed < 60,
           f"worst relative error {worst:.2e} < 1e-4 over 5 seeds ({names}); {elapsed:.1f}s < 60s")


def test_ac2_conv_oracle():
    results = check_conv_oracle(100, seed=0)
    worst = max(r.max_error for r in results)
    record("AC-2", worst < 1e-9, f"max abs diff vs loop oracle {worst:.2e} < 1e-9 over 100 configs")


def test_ac3_adjoint():
    r = check_adjoint(100, seed=1)
    record("AC-3", r.max_error < 1e-9, f"max adjoint gap {r.max_error:.2e} < 1e-9 over 100 configs")


def test_ac4_detection(detection):
    d = detection
    ok = d.recall >= 0.90 and d.false_positive_rate <= 0.10 and d.runtime_s < 600
    record("AC-4", ok, f"recall {d.recall:.3f} >= 0.90, FPR {d.false_positive_rate:.3f} <= 0.10, "
                       f"runtime {d.runtime_s:.0f}s < 600s (train {d.n_train}, held-out {d.n_heldout})")


def test_ac5_transfer(detection, tmp_path):
    res = run_transfer(tmp_path, source_model=detection.model, source_report=detection.train_report)
    rep = res.report
    ft1, sc1 = rep.fine_tune.epoch_losses[0], rep.from_scratch.epoch_losses[0]
    ok = rep.speedup_ratio >= 2.0 and ft1 < sc1
    record("AC-5", ok, f"speedup {rep.speedup_ratio:.2f} >= 2.0 (epochs to target {rep.epochs_to_target}), "
                       f"epoch-1 loss fine-tune {ft1:.4f} < scratch {sc1:.4f}")


def test_ac6_classifier_round_trip():
    airport = SOURCE_PROFILE.airport()
    bases = gen_nominal(SOURCE_PROFILE, 100, 17, prefix="CLS")
    counts = {}
    for kind in INJECTION_TYPES:
        hits = 0
        for i, base in enumerate(bases):
            tr = inject(base, InjectionSpec(kind, seed=i), airport)
            hits += classify_anomaly(tr, clip_terminal(tr, airport), airport).category == kind
        counts[kind] = hits
    record("AC-6", min(counts.values()) >= 95,
           "recovered per 100: " + ", ".join(f"{k} {v}" for k, v in counts.items()))


def test_ac7_determinism(tmp_path):
    stats, x = nominal_training_set()
    curves, blobs = [], []
    for run in range(2):
        model = init_model(ModelConfig(seed=11), stats)
        curves.append(train(model, x, 3, batch_size=32, seed=11).epoch_losses)
        save_checkpoint(model, tmp_path / f"run{run}.ckpt")
        blobs.append((tmp_path / f"run{run}.ckpt").read_bytes())
    loaded, _ = load_checkpoint(tmp_path / "run0.ckpt")
    bitwise = loaded.reconstruct(x).tobytes() == model.reconstruct(x).tobytes()
    ok = blobs[0] == blobs[1] and curves[0] == curves[1] and bitwise
    record("AC-7", ok, f"checkpoints identical {blobs[0] == blobs[1]}, loss curves identical "
                       f"{curves[0] == curves[1]}, round-trip reconstruct bitwise {bitwise}")


def test_ac8_threshold_contract():
    stats, x = nominal_training_set(seed=4)
    model = init_model(ModelConfig(seed=2), stats)
    train(model, x, 3, batch_size=32, seed=2)
    delta = calibrate_threshold(model, x)
    maes = reconstruction_errors(model, x)
    alarms = int(np.sum(maes > delta))
    qs = np.linspace(0.01, 1.0, 100)
    deltas = [threshold_from_scores(maes, ThresholdPolicy.quantile(q)) for q in qs]
    monotone = all(a <= b for a, b in zip(deltas, deltas[1:]))
    record("AC-8", alarms == 0 and monotone,
           f"{alarms} alarms on {len(maes)} calibration samples; quantile delta nondecreasing over 100 q: {monotone}")


def test_spiked_track_scores_above_original(detection):
    # paired comparison on the fully trained model; fixed bases, injection seeds 0..99
    airport = SOURCE_PROFILE.airport()
    bases = gen_nominal(SOURCE_PROFILE, 100, 2, prefix="SPK")
    spiked = [inject(b, InjectionSpec("point_altitude", seed=i), airport) for i, b in enumerate(bases)]
    a = score_series(detection.model, [p.features for p in prepare(bases, airport)])
    b = score_series(detection.model, [p.features for p in prepare(spiked, airport)])
    wins = int(np.sum(b > a))
    print(f"spike pairs: {wins}/100 strictly higher, smallest difference {np.min(b - a):.4g}")
    assert wins == 100


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
