"""Conv1D encoder / Conv1DTranspose decoder, its training loop and the
checkpoint format."""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import AdamState, Parameter, Tensor, adam_step, backward
from .autodiff import functional as F
from .features import FeatureSeries, NormStats, stack

CHECKPOINT_MAGIC = b"TRKAE\x00CK"
CHECKPOINT_VERSION = 1


class InvalidConfig(ValueError):
    pass


class NumericalAbort(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Layer stacks as ``(filters, kernel, stride)`` triples.

    Encoder layers are relu convolutions with ``same`` padding.  Decoder
    layers are relu transposed convolutions except the last, which is a
    linear projection back to ``input_channels``.
    """

    input_length: int = 256
    input_channels: int = 2
    encoder_layers: tuple = ((32, 7, 2), (16, 7, 2), (4, 7, 2))
    decoder_layers: tuple = ((16, 7, 2), (32, 7, 2), (2, 7, 2))
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_layers", tuple(tuple(int(v) for v in l) for l in self.encoder_layers))
        object.__setattr__(self, "decoder_layers", tuple(tuple(int(v) for v in l) for l in self.decoder_layers))

    def bottleneck_shape(self) -> tuple:
        length, channels = self.input_length, self.input_channels
        for filters, kernel, stride in self.encoder_layers:
            length, _ = F.conv_geometry(length, kernel, stride, "same")
            channels = filters
        return channels, length

    def output_shape(self) -> tuple:
        channels, length = self.bottleneck_shape()
        for filters, _, stride in self.decoder_layers:
            channels, length = filters, length * stride
        return channels, length

    def validate(self) -> None:
        if self.input_length < 2 or self.input_channels < 1:
            raise InvalidConfig("input shape must be at least [1, 2]")
        if not self.encoder_layers or not self.decoder_layers:
            raise InvalidConfig("encoder and decoder need at least one layer each")
        for f, k, s in self.encoder_layers + self.decoder_layers:
            if f < 1 or k < 1 or s < 1:
                raise InvalidConfig(f"layer ({f}, {k}, {s}) has a non-positive entry")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig(f"dropout_rate {self.dropout_rate} outside [0, 1)")
        want = (self.input_channels, self.input_length)
        got = self.output_shape()
        if got != want:
            raise InvalidConfig(f"decoder output shape {list(got)} != input shape {list(want)}")
        z = math.prod(self.bottleneck_shape())
        x = self.input_channels * self.input_length
        if z >= x:
            raise InvalidConfig(f"bottleneck {list(self.bottleneck_shape())} has {z} elements, "
                                f"not fewer than the {x} input elements")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_layers"] = [list(l) for l in self.encoder_layers]
        d["decoder_layers"] = [list(l) for l in self.decoder_layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    wall_time_s: float = 0.0
    epochs_run: int = 0
    final_train_mae: float = float("nan")

    def to_csv(self) -> str:
        lines = ["epoch,loss"]
        lines += [f"{i},{loss!r}" for i, loss in enumerate(self.epoch_losses, start=1)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainReport":
        lines = text.strip().splitlines()
        if not lines or lines[0] != "epoch,loss":
            raise ValueError("not a train report: expected an 'epoch,loss' header")
        try:
            losses = [float(line.split(",")[1]) for line in lines[1:]]
        except (IndexError, ValueError):
            raise ValueError("not a train report: malformed row") from None
        return cls(losses, epochs_run=len(losses))


def _rng(*key: int) -> np.random.Generator:
    """Counter-based generator keyed on a tuple of integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


class Autoencoder:
    def __init__(self, config: ModelConfig, norm_stats: Optional[NormStats] = None):
        config.validate()
        self.config = config
        self.norm_stats = norm_stats
        self.params: dict[str, Parameter] = {}
        rng = _rng(config.seed, 0)
        c_in = config.input_channels
        for i, (filters, kernel, _) in enumerate(config.encoder_layers):
            self._add(f"enc{i}.weight", F.he_uniform(rng, (filters, c_in, kernel), c_in * kernel))
            self._add(f"enc{i}.bias", np.zeros(filters))
            c_in = filters
        for i, (filters, kernel, _) in enumerate(config.decoder_layers):
            self._add(f"dec{i}.weight", F.he_uniform(rng, (c_in, filters, kernel), c_in * kernel))
            self._add(f"dec{i}.bias", np.zeros(filters))
            c_in = filters

    def _add(self, name: str, data: np.ndarray) -> None:
        self.params[name] = Parameter(data, name)

    @property
    def first_layer(self) -> list[str]:
        return ["enc0.weight", "enc0.bias"]

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def _check_input(self, x: np.ndarray) -> None:
        want = (self.config.input_channels, self.config.input_length)
        if x.ndim != 3 or x.shape[1:] != want:
            raise ValueError(f"input shape {list(x.shape)} does not match [B, {want[0]}, {want[1]}]")

    def _encode(self, x: Tensor, rng=None) -> Tensor:
        p = self.params
        for i, (_, _, stride) in enumerate(self.config.encoder_layers):
            x = F.relu(F.conv1d(x, p[f"enc{i}.weight"], p[f"enc{i}.bias"], stride, "same"))
            if i == 0:
                x = F.dropout(x, self.config.dropout_rate, rng, training=rng is not None)
        return x

    def _decode(self, z: Tensor, rng=None) -> Tensor:
        p = self.params
        last = len(self.config.decoder_layers) - 1
        for i, (_, _, stride) in enumerate(self.config.decoder_layers):
            z = F.conv1d_transpose(z, p[f"dec{i}.weight"], p[f"dec{i}.bias"], stride)
            if i < last:
                z = F.relu(z)
            if i == 0 and i < last:
                z = F.dropout(z, self.config.dropout_rate, rng, training=rng is not None)
        return z

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Reconstruction graph; dropout is active only when ``rng`` is given."""
        return self._decode(self._encode(x, rng), rng)

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        self._check_input(x)
        return self._encode(Tensor(x)).data

    def decode(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        want = self.config.bottleneck_shape()
        if z.ndim != 3 or z.shape[1:] != want:
            raise ValueError(f"bottleneck shape {list(z.shape)} does not match [B, {want[0]}, {want[1]}]")
        return self._decode(Tensor(z)).data

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode decode(encode(x))."""
        return self.decode(self.encode(x))

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}


def init_model(config: ModelConfig, norm_stats: Optional[NormStats] = None) -> Autoencoder:
    return Autoencoder(config, norm_stats)


def _as_batch(train_set) -> np.ndarray:
    if isinstance(train_set, np.ndarray):
        return np.asarray(train_set, dtype=float)
    return stack(train_set)


def train(model: Autoencoder, train_set: Sequence[FeatureSeries] | np.ndarray, epochs: int,
          batch_size: int = 64, lr: float = 1e-3, seed: int = 0,
          state: Optional[AdamState] = None, log=None) -> TrainReport:
    """Minimize reconstruction MAE with Adam over seeded shuffled mini-batches.

    ``train_set`` must already be normalized with the model's statistics.
    Parameters are updated in place.
    """
    data = _as_batch(train_set)
    if data.shape[0] == 0:
        raise ValueError("empty training set")
    model._check_input(data)
    state = state or AdamState(lr=lr)
    params = model.parameters()
    report = TrainReport()
    start = time.perf_counter()
    n = data.shape[0]
    for epoch in range(epochs):
        order = _rng(seed, 1, epoch).permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, batch_size)):
            batch = data[order[lo:lo + batch_size]]
            x = Tensor(batch)
            loss = F.mae_loss(x, model.forward(x, _rng(seed, 2, epoch, b)))
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalAbort(f"non-finite loss {value} at epoch {epoch + 1}, batch {b} "
                                     f"(lr={state.lr}); try a smaller learning rate")
            for p in params:
                p.grad = None
            backward(loss)
            adam_step(params, state)
            total += value * batch.shape[0]
        report.epoch_losses.append(total / n)
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs} loss {total / n:.5f}")
    report.epochs_run = epochs
    report.wall_time_s = time.perf_counter() - start
    report.final_train_mae = float(np.mean(reconstruction_errors(model, data)))
    return report


def reconstruction_errors(model: Autoencoder, data: np.ndarray) -> np.ndarray:
    """Per-sample eval-mode MAE.  Samples are scored one at a time so each
    value does not depend on what else is in the batch."""
    data = _as_batch(data)
    model._check_input(data)
    out = np.empty(data.shape[0])
    for i in range(data.shape[0]):
        x = data[i:i + 1]
        out[i] = np.abs(x - model.reconstruct(x)).mean()
    return out


# ------------------------------------------------------------------ checkpoints

def save_checkpoint(model: Autoencoder, path, threshold: Optional[float] = None) -> None:
    """Versioned container: magic, version, manifest length, JSON manifest,
    little-endian float64 parameter blocks in manifest order."""
    names = list(model.params)
    manifest = {
        "config": model.config.to_dict(),
        "norm_stats": None if model.norm_stats is None else
        {"mean": list(model.norm_stats.mean), "std": list(model.norm_stats.std)},
        "threshold": threshold,
        "params": [{"name": k, "shape": list(model.params[k].shape)} for k in names],
    }
    payload = b"".join(np.ascontiguousarray(model.params[k].data, dtype="<f8").tobytes() for k in names)
    manifest["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    text = json.dumps(manifest, sort_keys=True).encode()
    blob = CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(text)) + text + payload
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> tuple[Autoencoder, Optional[float]]:
    """Return ``(model, threshold)``; ``threshold`` is None when uncalibrated."""
    blob = Path(path).read_bytes()
    head = len(CHECKPOINT_MAGIC) + 12
    if len(blob) < head or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, mlen = struct.unpack("<IQ", blob[len(CHECKPOINT_MAGIC):head])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    if len(blob) < head + mlen:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[head:head + mlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
    payload = blob[head + mlen:]
    expected = sum(8 * math.prod(p["shape"]) for p in manifest["params"])
    if len(payload) != expected:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    ns = manifest["norm_stats"]
    model = Autoencoder(ModelConfig.from_dict(manifest["config"]),
                        None if ns is None else NormStats(ns["mean"], ns["std"]))
    offset = 0
    for entry in manifest["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in model.params or model.params[name].shape != shape:
            raise CheckpointError(f"{path}: parameter {name} {list(shape)} does not fit the config")
        size = 8 * math.prod(shape)
        model.params[name].data = np.frombuffer(payload, "<f8", count=size // 8, offset=offset).reshape(shape).astype(float)
        offset += size
    return model, manifest["threshold"]
