"""Glue between the modules: clip, filter, resample, score and classify a
batch of tracks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .anomaly import AnomalyReport, ClassifierConfig, classify_anomaly, is_alarm
from .autoencoder import Autoencoder, reconstruction_errors
from .features import (DEFAULT_LENGTH, FeatureSeries, FilterRuleSet, ResampleError, Verdict, apply_norm,
                       label_preliminary_normal, resample, stack)
from .geo import AirportConfig, Track, clip_terminal


@dataclass
class PreparedTrack:
    track: Track
    segment: Optional[Track] = None
    verdict: Optional[Verdict] = None
    features: Optional[FeatureSeries] = None
    error: Optional[str] = None

    @property
    def flight_id(self) -> str:
        return self.track.flight_id

    @property
    def trainable(self) -> bool:
        return self.features is not None and self.verdict is not None and self.verdict.normal


def prepare_track(track: Track, airport: AirportConfig, rules: FilterRuleSet = FilterRuleSet(),
                  length: int = DEFAULT_LENGTH) -> PreparedTrack:
    segment = clip_terminal(track, airport)
    if segment is None:
        return PreparedTrack(track, error="does not end inside the terminal area")
    verdict = label_preliminary_normal(segment, rules, airport)
    try:
        features = resample(segment, length, airport)
    except ResampleError as exc:
        return PreparedTrack(track, segment, verdict, error=f"unresamplable: {exc}")
    return PreparedTrack(track, segment, verdict, features)


def prepare(tracks: Iterable[Track], airport: AirportConfig, rules: FilterRuleSet = FilterRuleSet(),
            length: int = DEFAULT_LENGTH) -> list[PreparedTrack]:
    return [prepare_track(t, airport, rules, length) for t in tracks]


def normalized_batch(model: Autoencoder, series: Sequence[FeatureSeries]) -> np.ndarray:
    if model.norm_stats is None:
        raise ValueError("model has no normalization statistics")
    return stack([apply_norm(fs, model.norm_stats) for fs in series])


def score_series(model: Autoencoder, series: Sequence[FeatureSeries]) -> np.ndarray:
    if not series:
        return np.empty(0)
    return reconstruction_errors(model, normalized_batch(model, series))


def build_reports(model: Autoencoder, delta: Optional[float], prepared: Sequence[PreparedTrack],
                  airport: Optional[AirportConfig] = None,
                  classifier: Optional[ClassifierConfig] = None) -> list[AnomalyReport]:
    """Score every featurized track; classify alarms when ``airport`` is given."""
    usable = [p for p in prepared if p.features is not None]
    maes = score_series(model, [p.features for p in usable])
    reports = []
    for p, mae in zip(usable, maes):
        alarm = is_alarm(float(mae), delta)
        taxonomy = None
        if alarm and airport is not None:
            taxonomy = classify_anomaly(p.track, p.segment, airport, classifier or ClassifierConfig())
        reports.append(AnomalyReport(p.flight_id, float(mae), alarm, taxonomy,
                                     p.track.weight_class.value, p.track.is_helicopter))
    return reports


def detected(p: PreparedTrack, mae: Optional[float], delta: float) -> bool:
    """A track is caught when a filter rule fires, it cannot be featurized,
    or its reconstruction error exceeds the threshold."""
    if p.features is None or (p.verdict is not None and not p.verdict.normal):
        return True
    return mae is not None and mae > delta
