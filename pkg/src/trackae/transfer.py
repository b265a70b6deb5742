"""Developed-model transfer: reuse a source-airport model, freeze its first
layer, fine-tune the rest on the target airport, and compare against
training the same architecture from scratch."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .autoencoder import Autoencoder, InvalidConfig, ModelConfig, TrainReport, init_model, load_checkpoint, train
from .features import FeatureSeries, apply_norm, fit_norm_stats, stack


def freeze(model: Autoencoder, names: Sequence[str]) -> Autoencoder:
    """Mark exactly ``names`` frozen; every other parameter becomes trainable."""
    unknown = [n for n in names if n not in model.params]
    if unknown:
        raise ValueError(f"unknown parameter(s) {unknown}; valid names: {list(model.params)}")
    wanted = set(names)
    for name, p in model.params.items():
        p.frozen = name in wanted
    return model


@dataclass
class TransferSpec:
    source_checkpoint: Path
    freeze_layer_names: Optional[list] = None  # None = the first encoder convolution
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    expected_config: Optional[ModelConfig] = None


def _target_batch(model: Autoencoder, target_train_set: Sequence[FeatureSeries]):
    if not target_train_set:
        raise ValueError("empty target training set")
    # target statistics replace the source ones
    model.norm_stats = fit_norm_stats(target_train_set)
    return stack([apply_norm(fs, model.norm_stats) for fs in target_train_set])


def fine_tune(spec: TransferSpec, target_train_set: Sequence[FeatureSeries]) -> tuple[Autoencoder, TrainReport]:
    """Load the source model, refit normalization on the raw target series,
    freeze, and train the remaining layers."""
    model, _ = load_checkpoint(spec.source_checkpoint)
    if spec.expected_config is not None:
        want, got = spec.expected_config, model.config
        if (want.input_length, want.input_channels, want.encoder_layers, want.decoder_layers) != \
                (got.input_length, got.input_channels, got.encoder_layers, got.decoder_layers):
            raise InvalidConfig(f"source checkpoint architecture {got.to_dict()} "
                                f"does not match the expected {want.to_dict()}")
    names = model.first_layer if spec.freeze_layer_names is None else spec.freeze_layer_names
    freeze(model, names)
    data = _target_batch(model, target_train_set)
    report = train(model, data, spec.epochs, spec.batch_size, spec.lr, spec.seed)
    return model, report


@dataclass
class TransferReport:
    fine_tune: TrainReport
    from_scratch: Optional[TrainReport] = None
    loss_target: float = float("nan")
    epochs_to_target: dict = field(default_factory=dict)
    speedup_ratio: float = float("nan")
    fine_tuned: Optional[Autoencoder] = field(default=None, repr=False, compare=False)

    def to_csv(self) -> str:
        ft = self.fine_tune.epoch_losses
        sc = self.from_scratch.epoch_losses if self.from_scratch else []
        lines = ["epoch,finetune_loss,scratch_loss"]
        for i in range(max(len(ft), len(sc))):
            a = repr(ft[i]) if i < len(ft) else ""
            b = repr(sc[i]) if i < len(sc) else ""
            lines.append(f"{i + 1},{a},{b}")
        return "\n".join(lines) + "\n"


def epochs_to_target(losses: Sequence[float], target: float, budget: int) -> int:
    """First (1-based) epoch whose loss is at or below ``target``; ``budget + 1`` if none."""
    for i, loss in enumerate(losses[:budget], start=1):
        if loss <= target:
            return i
    return budget + 1


def compare_transfer(source_checkpoint, target_set: Sequence[FeatureSeries], loss_target: float,
                     budget_epochs: int, seed: int = 0, batch_size: int = 64, lr: float = 1e-3,
                     freeze_layer_names: Optional[list] = None,
                     scratch_config: Optional[ModelConfig] = None) -> TransferReport:
    """Fine-tune and from-scratch arms on identical data and hyperparameters.

    The scratch arm uses the source architecture with its own seed unless
    ``scratch_config`` is given.
    """
    spec = TransferSpec(Path(source_checkpoint), freeze_layer_names, budget_epochs, batch_size, lr, seed)
    ft_model, ft_report = fine_tune(spec, target_set)

    source, _ = load_checkpoint(source_checkpoint)
    scratch = init_model(scratch_config or source.config)
    data = _target_batch(scratch, target_set)
    sc_report = train(scratch, data, budget_epochs, batch_size, lr, seed)

    ft_epochs = epochs_to_target(ft_report.epoch_losses, loss_target, budget_epochs)
    sc_epochs = epochs_to_target(sc_report.epoch_losses, loss_target, budget_epochs)
    return TransferReport(ft_report, sc_report, loss_target,
                          {"fine_tune": ft_epochs, "from_scratch": sc_epochs}, sc_epochs / ft_epochs, ft_model)
