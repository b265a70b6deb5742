"""Arrival-track anomaly detection with a 1D convolutional autoencoder."""

from .anomaly import (AnomalyClass, AnomalyReport, ClassifierConfig, SummaryStats, ThresholdPolicy,
                      calibrate_threshold, classify_anomaly, detect, score, summarize)
from .autoencoder import (Autoencoder, ModelConfig, TrainReport, init_model, load_checkpoint,
                          reconstruction_errors, save_checkpoint, train)
from .features import FeatureSeries, FilterRuleSet, NormStats, SplitSpec, label_preliminary_normal, resample
from .geo import AirportConfig, RunwayThreshold, Track, TrackPoint, clip_terminal, haversine_nm, parse_tracks
from .transfer import TransferReport, TransferSpec, compare_transfer, fine_tune, freeze

__version__ = "0.1.0"
