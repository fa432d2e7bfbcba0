"""Parameterised layers built on the ops in :mod:`stereovoc.autodiff`."""

from __future__ import annotations

import math

import torch
from torch import nn

from .. import autodiff as ad
from ..dsp import kaiser_sinc

INIT_STD = 0.01


class Conv1d(nn.Module):
    def __init__(self, c_in, c_out, kernel, stride=1, dilation=1, padding=None):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(c_out, c_in, kernel))
        self.bias = nn.Parameter(torch.empty(c_out))
        self.stride = stride
        self.dilation = dilation
        self.padding = dilation * (kernel - 1) // 2 if padding is None else padding

    def forward(self, x):
        return ad.conv1d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class ConvTranspose1d(nn.Module):
    """Upsamples by exactly ``rate``: kernel ``rate + 2*ceil(rate/2)``."""

    def __init__(self, c_in, c_out, rate):
        super().__init__()
        kernel = rate + 2 * math.ceil(rate / 2)
        self.weight = nn.Parameter(torch.empty(c_in, c_out, kernel))
        self.bias = nn.Parameter(torch.empty(c_out))
        self.stride = rate
        self.padding = (kernel - rate) // 2

    def forward(self, x):
        return ad.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding)


class Conv2d(nn.Module):
    def __init__(self, c_in, c_out, kernel, stride=(1, 1), padding=None):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(c_out, c_in, *kernel))
        self.bias = nn.Parameter(torch.empty(c_out))
        self.stride = stride
        self.padding = tuple(k // 2 for k in kernel) if padding is None else padding

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Snake(nn.Module):
    """Per-channel snake; the frequency is stored as its log to stay positive."""

    def __init__(self, channels):
        super().__init__()
        self.log_alpha = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        return ad.snake(x, self.log_alpha.exp())


class AntiAliasedSnake(nn.Module):
    """2x sinc upsample -> snake -> 2x sinc downsample, all depthwise."""

    def __init__(self, channels, taps=127):
        super().__init__()
        self.act = Snake(channels)
        self.channels = channels
        self.taps = taps
        h = torch.tensor(kaiser_sinc(taps, 0.5), dtype=torch.float32)
        self.register_buffer("kernel", h.flip(0).repeat(channels, 1, 1), persistent=False)

    def _lowpass(self, x):
        k = self.kernel.to(x.dtype)
        return torch.nn.functional.conv1d(x, k, padding=(self.taps - 1) // 2, groups=self.channels)

    def forward(self, x):
        up = torch.stack([x, torch.zeros_like(x)], dim=-1).reshape(*x.shape[:-1], -1)
        y = self.act(2.0 * self._lowpass(up))
        return self._lowpass(y)[..., ::2]


def init_weights(module: nn.Module, generator: torch.Generator):
    """N(0, 0.01) weights, zero biases, unit snake frequency; fixed order."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("log_alpha") or name.endswith("bias"):
                p.zero_()
            else:
                p.copy_(torch.randn(p.shape, generator=generator, dtype=p.dtype) * INIT_STD)
