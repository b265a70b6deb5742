"""Numerical self-tests: brute-force convolution oracles, the conv/transpose
adjoint identity and central-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, backward
from .autodiff import functional as F
from .autoencoder import ModelConfig, init_model

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-9
FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max error {self.max_error:.3e} (tol {self.tol:.0e})"


def naive_conv1d(x, w, b, stride, padding):
    batch, c_in, length = x.shape
    c_out, _, kernel = w.shape
    out_len, pad = F.conv_geometry(length, kernel, stride, padding)
    out = np.zeros((batch, c_out, out_len))
    for n in range(batch):
        for o in range(c_out):
            for j in range(out_len):
                acc = 0.0 if b is None else b[o]
                for c in range(c_in):
                    for k in range(kernel):
                        i = j * stride + k - pad
                        if 0 <= i < length:
                            acc += x[n, c, i] * w[o, c, k]
                out[n, o, j] = acc
    return out


def naive_conv1d_transpose(x, w, b, stride):
    batch, c_in, length = x.shape
    _, c_out, kernel = w.shape
    out_len = length * stride
    _, pad = F.conv_geometry(out_len, kernel, stride, "same")
    out = np.zeros((batch, c_out, out_len))
    for n in range(batch):
        for c in range(c_in):
            for j in range(length):
                for o in range(c_out):
                    for k in range(kernel):
                        i = j * stride + k - pad
                        if 0 <= i < out_len:
                            out[n, o, i] += x[n, c, j] * w[c, o, k]
    if b is not None:
        out += b[None, :, None]
    return out


def _random_conv_config(rng):
    stride = int(rng.integers(1, 4))
    kernel = int(rng.integers(1, 8))
    length = int(rng.integers(max(4, kernel), 65))
    return stride, kernel, length, int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))


def check_conv_oracle(n_configs: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    fwd = tr = 0.0
    for _ in range(n_configs):
        s, k, length, batch, c_in, c_out = _random_conv_config(rng)
        padding = "same" if rng.random() < 0.5 else "valid"
        x, w, b = rng.normal(size=(batch, c_in, length)), rng.normal(size=(c_out, c_in, k)), rng.normal(size=c_out)
        got = F.conv1d(Tensor(x), Tensor(w), Tensor(b), s, padding).data
        fwd = max(fwd, float(np.max(np.abs(got - naive_conv1d(x, w, b, s, padding)))))
        wt = rng.normal(size=(c_in, c_out, k))
        got = F.conv1d_transpose(Tensor(x), Tensor(wt), Tensor(b), s).data
        tr = max(tr, float(np.max(np.abs(got - naive_conv1d_transpose(x, wt, b, s)))))
    return [CheckResult(f"conv1d vs brute force ({n_configs} configs)", fwd, ORACLE_TOL),
            CheckResult(f"conv1d_transpose vs brute force ({n_configs} configs)", tr, ORACLE_TOL)]


def check_adjoint(n_configs: int = 100, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        s, k, length, batch, c_in, c_out = _random_conv_config(rng)
        w = rng.normal(size=(c_out, c_in, k))
        x = rng.normal(size=(batch, c_in, length * s))
        y = rng.normal(size=(batch, c_out, length))
        lhs = float(np.sum(F.conv1d(Tensor(x), Tensor(w), None, s, "same").data * y))
        rhs = float(np.sum(x * F.conv1d_transpose(Tensor(y), Tensor(w), None, s).data))
        worst = max(worst, abs(lhs - rhs))
    return CheckResult(f"<conv1d(x), y> = <x, conv1d_transpose(y)> ({n_configs} configs)", worst, ORACLE_TOL)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(num / den)


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr``, perturbed in place."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def gradcheck(build: Callable[[Sequence[Tensor]], Tensor], arrays: Sequence[np.ndarray]) -> float:
    """Worst relative error between backward() and central differences over
    every input of ``build``, which maps leaf tensors to a scalar."""
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    backward(build(leaves))
    worst = 0.0
    for leaf in leaves:
        numeric = numeric_grad(lambda: float(build(leaves).data), leaf.data)
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return (out * Tensor(weights)).sum()


def primitive_gradchecks(seeds: Sequence[int] = range(5)) -> list[CheckResult]:
    errors = {"conv1d": 0.0, "conv1d_transpose": 0.0, "relu": 0.0, "dropout": 0.0, "mae_loss": 0.0}
    for seed in seeds:
        rng = np.random.default_rng(100 + seed)
        s, k, length, batch, c_in, c_out = _random_conv_config(rng)
        length = min(length, 24)
        k = min(k, length)
        padding = "same" if seed % 2 == 0 else "valid"
        out_len, _ = F.conv_geometry(length, k, s, padding)
        r = rng.normal(size=(batch, c_out, out_len))
        errors["conv1d"] = max(errors["conv1d"], gradcheck(
            lambda t: _weighted(F.conv1d(t[0], t[1], t[2], s, padding), r),
            [rng.normal(size=(batch, c_in, length)), rng.normal(size=(c_out, c_in, k)), rng.normal(size=c_out)]))
        r = rng.normal(size=(batch, c_out, length * s))
        errors["conv1d_transpose"] = max(errors["conv1d_transpose"], gradcheck(
            lambda t: _weighted(F.conv1d_transpose(t[0], t[1], t[2], s), r),
            [rng.normal(size=(batch, c_in, length)), rng.normal(size=(c_in, c_out, k)), rng.normal(size=c_out)]))
        shape = (batch, c_in, length)
        r = rng.normal(size=shape)
        errors["relu"] = max(errors["relu"], gradcheck(lambda t: _weighted(F.relu(t[0]), r),
                                                       [rng.normal(size=shape)]))
        errors["dropout"] = max(errors["dropout"], gradcheck(
            lambda t: _weighted(F.dropout(t[0], 0.3, np.random.default_rng(seed), training=True), r),
            [rng.normal(size=shape)]))
        errors["mae_loss"] = max(errors["mae_loss"], gradcheck(
            lambda t: F.mae_loss(t[0], t[1]), [rng.normal(size=shape), rng.normal(size=shape)]))
    n = len(list(seeds))
    return [CheckResult(f"gradient {name} ({n} seeds)", err, GRAD_TOL) for name, err in errors.items()]


TINY_CONFIG = dict(input_length=16, input_channels=2, encoder_layers=((4, 3, 2), (2, 3, 2)),
                   decoder_layers=((4, 3, 2), (2, 3, 2)), dropout_rate=0.2)


def autoencoder_gradcheck(seeds: Sequence[int] = range(5)) -> CheckResult:
    """Every parameter of a small autoencoder, dropout active with a fixed mask."""
    worst = 0.0
    for seed in seeds:
        model = init_model(ModelConfig(seed=seed, **TINY_CONFIG))
        rng = np.random.default_rng(200 + seed)
        # zero biases put whole channels exactly on the relu kink, where
        # central differences are meaningless; check at a generic point
        for name, p in model.params.items():
            if name.endswith("bias"):
                p.data[...] = rng.normal(scale=0.1, size=p.data.shape)
        x = Tensor(rng.normal(size=(3, 2, 16)))

        def loss():
            return F.mae_loss(x, model.forward(x, np.random.default_rng(seed)))

        params = model.parameters()
        for p in params:
            p.grad = None
        backward(loss())
        for p in params:
            numeric = numeric_grad(lambda: float(loss().data), p.data)
            worst = max(worst, relative_error(p.grad, numeric))
    return CheckResult(f"gradient composed autoencoder ({len(list(seeds))} seeds)", worst, GRAD_TOL)


def run_all(log: Callable[[str], None] = print) -> list[CheckResult]:
    results = check_conv_oracle() + [check_adjoint()] + primitive_gradchecks() + [autoencoder_gradcheck()]
    for r in results:
        log(r.line())
    return results
