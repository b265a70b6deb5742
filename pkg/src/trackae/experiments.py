"""Desk-scale experiments on synthetic airports: end-to-end detection and
the transfer-learning comparison."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .anomaly import ThresholdPolicy, calibrate_threshold
from .autoencoder import Autoencoder, ModelConfig, TrainReport, init_model, save_checkpoint, train
from .features import FilterRuleSet, SplitSpec, apply_norm, fit_norm_stats, split_train_test, stack
from .pipeline import detected, prepare, score_series
from .synthgen import INJECTION_TYPES, AirportProfile, InjectionSpec, gen_nominal, inject
from .transfer import TransferReport, compare_transfer

SOURCE_PROFILE = AirportProfile(airport_code="SRC", field_elev=2000.0)
TARGET_PROFILE = AirportProfile(airport_code="TGT", field_elev=5000.0, entry_alt=14000.0,
                                entry_speed=220.0, final_speed=120.0, lat=33.69, lon=-112.08)


@dataclass
class DetectionResult:
    model: Autoencoder
    delta: float
    train_report: TrainReport
    n_train: int
    n_heldout: int
    recall: float
    false_positive_rate: float
    per_type: dict = field(default_factory=dict)  # type -> (recall, autoencoder-only recall)
    runtime_s: float = 0.0


def run_detection(n_train: int = 2000, n_heldout: int = 200, per_type: int = 20, epochs: int = 50,
                  batch_size: int = 64, lr: float = 1e-3, seed: int = 0,
                  profile: AirportProfile = SOURCE_PROFILE, config: Optional[ModelConfig] = None,
                  log: Optional[Callable[[str], None]] = None) -> DetectionResult:
    """Train on nominal arrivals, calibrate the max-MAE threshold, then score
    held-out nominal arrivals and injected anomalies."""
    start = time.perf_counter()
    airport = profile.airport()
    rules = FilterRuleSet()
    config = config or ModelConfig(seed=seed)

    nominal = prepare(gen_nominal(profile, n_train + n_heldout, seed), airport, rules, config.input_length)
    usable = [p for p in nominal if p.features is not None]
    train_part, held_part = split_train_test([p.features for p in usable],
                                             SplitSpec(n_train / (n_train + n_heldout), seed))
    train_ids = {fs.flight_id for fs in train_part}
    train_set = [p.features for p in usable if p.flight_id in train_ids and p.trainable]
    heldout = [p for p in nominal if p.flight_id not in train_ids]

    stats = fit_norm_stats(train_set)
    model = init_model(config, stats)
    data = stack([apply_norm(fs, stats) for fs in train_set])
    report = train(model, data, epochs, batch_size, lr, seed, log=log)
    delta = calibrate_threshold(model, data, ThresholdPolicy())

    bases = gen_nominal(profile, per_type * len(INJECTION_TYPES), seed + 1, prefix="INJ")
    injected = []
    for i, base in enumerate(bases):
        kind = INJECTION_TYPES[i // per_type]
        injected.append((kind, inject(base, InjectionSpec(kind, seed=seed * 100003 + i), airport)))
    inj_prepared = prepare([t for _, t in injected], airport, rules, config.input_length)

    def scores(prepared):
        feats = [p for p in prepared if p.features is not None]
        return dict(zip([p.flight_id for p in feats], score_series(model, [p.features for p in feats])))

    held_scores = scores(heldout)
    inj_scores = scores(inj_prepared)
    fp = [detected(p, held_scores.get(p.flight_id), delta) for p in heldout]
    hits = [detected(p, inj_scores.get(p.flight_id), delta) for p in inj_prepared]
    by_type = {}
    for kind in INJECTION_TYPES:
        idx = [i for i, (k, _) in enumerate(injected) if k == kind]
        ae = [inj_scores.get(inj_prepared[i].flight_id, -np.inf) > delta for i in idx]
        by_type[kind] = (float(np.mean([hits[i] for i in idx])), float(np.mean(ae)))
    return DetectionResult(model, delta, report, len(train_set), len(heldout), float(np.mean(hits)),
                           float(np.mean(fp)), by_type, time.perf_counter() - start)


@dataclass
class TransferResult:
    report: TransferReport
    source_report: TrainReport
    source_final_loss: float


def run_transfer(workdir: Path, n_source: int = 1000, n_target: int = 400, source_epochs: int = 30,
                 budget_epochs: int = 50, target_factor: float = 1.5, batch_size: int = 64,
                 lr: float = 1e-3, seed: int = 0, source_model: Optional[Autoencoder] = None,
                 source_report: Optional[TrainReport] = None) -> TransferResult:
    """Source airport -> target airport comparison with a loss target of
    ``target_factor`` times the source model's final training loss."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if source_model is None:
        src = prepare(gen_nominal(SOURCE_PROFILE, n_source, seed, prefix="S"), SOURCE_PROFILE.airport())
        feats = [p.features for p in src if p.trainable]
        stats = fit_norm_stats(feats)
        source_model = init_model(ModelConfig(seed=seed), stats)
        source_report = train(source_model, stack([apply_norm(f, stats) for f in feats]),
                              source_epochs, batch_size, lr, seed)
    ckpt = workdir / "source.ckpt"
    save_checkpoint(source_model, ckpt)
    source_final = source_report.epoch_losses[-1]

    tgt = prepare(gen_nominal(TARGET_PROFILE, n_target, seed + 7, prefix="T"), TARGET_PROFILE.airport())
    target_set = [p.features for p in tgt if p.trainable]
    report = compare_transfer(ckpt, target_set, target_factor * source_final, budget_epochs,
                              seed=seed + 1, batch_size=batch_size, lr=lr,
                              scratch_config=ModelConfig(seed=seed + 1))
    return TransferResult(report, source_report, source_final)
