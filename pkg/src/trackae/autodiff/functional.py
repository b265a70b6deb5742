"""Differentiable primitives: 1-D convolution and its transpose, relu,
dropout and the mean-absolute-error loss.

Sequence tensors use the ``[batch, channels, length]`` layout.  ``same``
padding follows the usual convention: output length ``ceil(L / s)`` with the
odd padding element placed on the right.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor


def conv_geometry(length: int, kernel: int, stride: int, padding: str) -> tuple[int, int]:
    """Return ``(out_length, pad_left)`` for a conv1d over ``length`` samples."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        out = -(-length // stride)
        total = max((out - 1) * stride + kernel - length, 0)
        return out, total // 2
    if padding == "valid":
        if kernel > length:
            raise ValueError(f"kernel {kernel} longer than input length {length}")
        return (length - kernel) // stride + 1, 0
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _windows(x: np.ndarray, kernel: int, stride: int, pad_left: int, out_len: int) -> np.ndarray:
    """Strided view ``[B, C, out_len, K]`` over the zero-padded input."""
    length = x.shape[2]
    need = (out_len - 1) * stride + kernel
    pad_right = max(need - length - pad_left, 0)
    xp = np.pad(x, ((0, 0), (0, 0), (pad_left, pad_right)))
    return sliding_window_view(xp, kernel, axis=2)[:, :, : need - kernel + 1 : stride, :]


def _correlate(x, w, stride, pad_left, out_len):
    # out[b,o,j] = sum_{c,k} xpad[b,c,j*s+k] * w[o,c,k]
    cols = _windows(x, w.shape[2], stride, pad_left, out_len)
    return np.tensordot(cols, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)


def _correlate_adjoint(g, w, stride, pad_left, length):
    # adjoint of _correlate w.r.t. x, for an input of the given length
    batch, _, out_len = g.shape
    kernel = w.shape[2]
    need = (out_len - 1) * stride + kernel
    acc = np.zeros((batch, w.shape[1], max(need, length + pad_left)))
    contrib = np.tensordot(g, w, axes=([1], [0])).transpose(0, 2, 1, 3)  # [B, C, J, K]
    stop = (out_len - 1) * stride + 1
    for k in range(kernel):
        acc[:, :, k : k + stop : stride] += contrib[:, :, :, k]
    return acc[:, :, pad_left : pad_left + length]


def _kernel_grad(x, g, kernel, stride, pad_left):
    # d/dw[o,c,k] = sum_{b,j} g[b,o,j] * xpad[b,c,j*s+k]
    cols = _windows(x, kernel, stride, pad_left, g.shape[2])
    return np.tensordot(g, cols, axes=([0, 2], [0, 2]))


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: str = "same") -> Tensor:
    """Cross-correlation of ``x [B, C_in, L]`` with ``weight [C_out, C_in, K]``."""
    _check(x.data.ndim == 3, f"input must be [B, C, L], got shape {x.shape}")
    _check(weight.data.ndim == 3, f"weight must be [C_out, C_in, K], got shape {weight.shape}")
    c_out, c_in, kernel = weight.shape
    _check(x.shape[1] == c_in, f"input channels {x.shape[1]} != weight C_in {c_in}")
    if bias is not None:
        _check(bias.shape == (c_out,), f"bias shape {bias.shape} != (C_out,) = ({c_out},)")
    length = x.shape[2]
    out_len, pad_left = conv_geometry(length, kernel, stride, padding)
    out = _correlate(x.data, weight.data, stride, pad_left, out_len)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def bw(g):
        gx = _correlate_adjoint(g, weight.data, stride, pad_left, length) if x.requires_grad else None
        gw = _kernel_grad(x.data, g, kernel, stride, pad_left) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor(out, parents, bw)


def conv1d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1) -> Tensor:
    """Transposed convolution, ``x [B, C_in, L]`` -> ``[B, C_out, L*stride]``.

    ``weight`` is ``[C_in, C_out, K]``.  Without bias this is exactly the
    adjoint of ``conv1d(., weight, stride=stride, padding="same")`` acting on
    sequences of length ``L*stride``.
    """
    _check(x.data.ndim == 3, f"input must be [B, C, L], got shape {x.shape}")
    _check(weight.data.ndim == 3, f"weight must be [C_in, C_out, K], got shape {weight.shape}")
    c_in, c_out, kernel = weight.shape
    _check(x.shape[1] == c_in, f"input channels {x.shape[1]} != weight C_in {c_in}")
    if bias is not None:
        _check(bias.shape == (c_out,), f"bias shape {bias.shape} != (C_out,) = ({c_out},)")
    length = x.shape[2]
    out_len = length * stride
    _, pad_left = conv_geometry(out_len, kernel, stride, "same")
    out = _correlate_adjoint(x.data, weight.data, stride, pad_left, out_len)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def bw(g):
        gx = _correlate(g, weight.data, stride, pad_left, length) if x.requires_grad else None
        gw = _kernel_grad(g, x.data, kernel, stride, pad_left) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor(out, parents, bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return Tensor(np.where(mask, x.data, 0.0), (x,), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Inverted dropout.  Identity (same object) in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    scale = 1.0 / (1.0 - rate)
    mask = (rng.random(x.shape) >= rate) * scale

    def bw(g):
        return (g * mask,)

    return Tensor(x.data * mask, (x,), bw)


def mae_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Mean absolute error over every element; subgradient 0 where equal."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    diff = x.data - x_hat.data
    n = diff.size
    sign = np.sign(diff)

    def bw(g):
        gd = g * sign / n
        return gd, -gd

    return Tensor(np.abs(diff).sum() / n, (x, x_hat), bw)


def he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)
