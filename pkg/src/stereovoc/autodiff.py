"""Differentiable tensor ops used by the networks and losses.

Tensors are ``torch.Tensor``; reverse-mode gradients come from torch's
autograd. This module pins down the exact op contracts (shapes, error
types, conventions) that the rest of the package relies on.
"""

from __future__ import annotations

from collections.abc import Mapping
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ContractError, ParameterError, ShapeError
from .spectral import StftConfig, window

Tensor = torch.Tensor
LEAKY_SLOPE = 0.1


def tensor(data, dtype=torch.float64, requires_grad: bool = False) -> Tensor:
    return torch.tensor(np.asarray(data), dtype=dtype, requires_grad=requires_grad)


def _batched(x: Tensor, ndim: int) -> tuple[Tensor, bool]:
    if x.dim() == ndim - 1:
        return x.unsqueeze(0), True
    if x.dim() != ndim:
        raise ShapeError(f"expected a {ndim - 1}-D or {ndim}-D tensor, got shape {tuple(x.shape)}")
    return x, False


def conv1d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation of ``x`` (``[B,] C_in, T``) with ``w`` (``C_out, C_in, K``)."""
    xb, squeeze = _batched(x, 3)
    if w.dim() != 3 or xb.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input channels {xb.shape[1]} vs weight {tuple(w.shape)}")
    t_out = (xb.shape[-1] + 2 * padding - dilation * (w.shape[-1] - 1) - 1) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d: non-positive output length {t_out} for input length {xb.shape[-1]}")
    y = F.conv1d(xb, w, bias, stride=stride, padding=padding, dilation=dilation)
    return y[0] if squeeze else y


def conv_transpose1d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv1d` with the same ``w`` (``C_in_of_conv1d`` outputs)."""
    xb, squeeze = _batched(x, 3)
    if w.dim() != 3 or xb.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose1d: input channels {xb.shape[1]} vs weight {tuple(w.shape)}")
    t_out = (xb.shape[-1] - 1) * stride - 2 * padding + w.shape[-1]
    if t_out < 1:
        raise ShapeError(f"conv_transpose1d: non-positive output length {t_out}")
    y = F.conv_transpose1d(xb, w, bias, stride=stride, padding=padding)
    return y[0] if squeeze else y


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    xb, squeeze = _batched(x, 4)
    if w.dim() != 4 or xb.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input channels {xb.shape[1]} vs weight {tuple(w.shape)}")
    y = F.conv2d(xb, w, bias, stride=stride, padding=padding)
    if min(y.shape[-2:]) < 1:
        raise ShapeError(f"conv2d: empty output for input {tuple(xb.shape)}")
    return y[0] if squeeze else y


def snake(x: Tensor, alpha: Tensor) -> Tensor:
    """``x + sin(alpha*x)**2 / alpha`` with one ``alpha`` per channel (axis -2)."""
    if torch.any(alpha <= 0):
        raise ParameterError("snake frequency alpha must be strictly positive")
    a = alpha.reshape(-1, 1) if alpha.dim() == 1 else alpha
    return x + torch.sin(a * x) ** 2 / a


def _same_shape(a: Tensor, b: Tensor, op: str):
    if not torch.is_tensor(a) or not torch.is_tensor(b):
        return
    sa, sb = tuple(a.shape), tuple(b.shape)
    if sa == sb or not sa or not sb:
        return

    # broadcasting only over leading singleton dimensions
    def core(s):
        i = 0
        while i < len(s) and s[i] == 1:
            i += 1
        return s[i:]

    ca, cb = core(sa), core(sb)
    short, long_ = (ca, cb) if len(ca) <= len(cb) else (cb, ca)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


def add(a, b):
    _same_shape(a, b, "add")
    return a + b


def sub(a, b):
    _same_shape(a, b, "sub")
    return a - b


def mul(a, b):
    _same_shape(a, b, "mul")
    return a * b


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    return F.leaky_relu(x, slope)


tanh = torch.tanh
abs = torch.abs  # noqa: A001 - op suite name
log = torch.log
square = torch.square
mean = torch.mean
sum = torch.sum  # noqa: A001


@lru_cache(maxsize=32)
def _dft_basis(fft_size: int, window_size: int, win_kind: str, dtype: torch.dtype):
    cfg = StftConfig(window_size, 1, fft_size, False, win_kind)
    n = np.arange(window_size)[:, None]
    k = np.arange(fft_size // 2 + 1)[None, :]
    ang = 2 * np.pi * n * k / fft_size
    w = window(cfg)[:, None]
    cos = torch.tensor(w * np.cos(ang), dtype=dtype)
    sin = torch.tensor(-w * np.sin(ang), dtype=dtype)
    return cos, sin


def frames(x: Tensor, cfg: StftConfig) -> Tensor:
    """``(..., T)`` -> ``(..., frames, window_size)`` with reflect centre padding."""
    if cfg.center:
        half = cfg.window_size // 2
        if x.shape[-1] <= half:
            raise ShapeError(f"signal of {x.shape[-1]} samples too short to reflect-pad by {half}")
        lead = x.shape[:-1]
        x = F.pad(x.reshape(-1, 1, x.shape[-1]), (half, half), mode="reflect").reshape(*lead, -1)
    if x.shape[-1] < cfg.window_size:
        raise ShapeError(f"signal of {x.shape[-1]} samples is shorter than window {cfg.window_size}")
    return x.unfold(-1, cfg.window_size, cfg.hop_size)


def framed_dft(x: Tensor, cfg: StftConfig) -> tuple[Tensor, Tensor]:
    """Windowed frames times fixed cos/sin matrices.

    Returns ``(real, imag)`` shaped ``(..., n_bins, frames)``, matching
    :func:`stereovoc.spectral.stft`.
    """
    cos, sin = _dft_basis(cfg.fft_size, cfg.window_size, cfg.window, x.dtype)
    fr = frames(x, cfg)
    return (fr @ cos).transpose(-1, -2), (fr @ sin).transpose(-1, -2)


def magnitude(real: Tensor, imag: Tensor, eps: float = 1e-12) -> Tensor:
    # eps keeps the gradient finite at exactly-zero bins
    return torch.sqrt(real * real + imag * imag + eps)


def backward(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, Tensor]:
    """Reverse-mode gradients of a scalar ``loss`` for every named parameter.

    Gradients accumulate additively into ``.grad``; the graph is freed.
    Parameters that the loss does not reach get zero gradients.
    """
    if loss.dim() != 0 and loss.numel() != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    loss.reshape(()).backward()
    out = {}
    for name, p in params.items():
        out[name] = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
    return out
