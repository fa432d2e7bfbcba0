"""Transposed-convolution + AMP generator shared by all three stages."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from ..errors import ConfigError, ShapeError
from .layers import AntiAliasedSnake, Conv1d, ConvTranspose1d, Snake, init_weights


@dataclass(frozen=True)
class GeneratorConfig:
    """Generator hyper-parameters.

    ``frame_hop`` is the hop of the input mel frontend at its own rate and
    ``rate_ratio`` the output/frontend sample-rate ratio (2 for BWE), so one
    frame becomes ``frame_hop * rate_ratio`` output samples.
    """

    mel_bands: int = 128
    base_channels: int = 32
    upsample_rates: tuple[int, ...] = (8, 8, 4)
    amp_kernel_sizes: tuple[int, ...] = (3,)
    amp_dilations: tuple[tuple[int, ...], ...] = ((1, 3, 5),)
    use_antialiased_activation: bool = False
    antialias_taps: int = 127
    output_tanh: bool = True
    frame_hop: int = 256
    rate_ratio: int = 1

    def __post_init__(self):
        object.__setattr__(self, "upsample_rates", tuple(int(r) for r in self.upsample_rates))
        object.__setattr__(self, "amp_kernel_sizes", tuple(int(k) for k in self.amp_kernel_sizes))
        object.__setattr__(self, "amp_dilations", tuple(tuple(int(d) for d in ds) for ds in self.amp_dilations))

    @property
    def total_upsample(self) -> int:
        return math.prod(self.upsample_rates)

    def channels(self) -> list[int]:
        return [self.base_channels // 2 ** i for i in range(len(self.upsample_rates) + 1)]

    def validate(self):
        if not self.upsample_rates or any(r < 1 for r in self.upsample_rates):
            raise ConfigError(f"upsample_rates must be positive, got {self.upsample_rates}")
        want = self.frame_hop * self.rate_ratio
        if self.total_upsample != want:
            raise ConfigError(f"product of upsample_rates {self.upsample_rates} = {self.total_upsample} "
                              f"but frame_hop*rate_ratio = {want}")
        if self.channels()[-1] < 1:
            raise ConfigError(f"base_channels={self.base_channels} halves below 1 over "
                              f"{len(self.upsample_rates)} upsample stages")
        if len(self.amp_kernel_sizes) != len(self.amp_dilations) or not self.amp_kernel_sizes:
            raise ConfigError("amp_kernel_sizes and amp_dilations need one entry per branch")
        if any(k % 2 == 0 for k in self.amp_kernel_sizes):
            raise ConfigError(f"AMP kernel sizes must be odd, got {self.amp_kernel_sizes}")
        if self.mel_bands < 1:
            raise ConfigError("mel_bands must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        return cls(**d)


class AMPBlock(nn.Module):
    """Average of residual branches; each branch chains ``x += conv_d(act(x))``."""

    def __init__(self, channels, kernel_sizes, dilations, antialiased=False, taps=127):
        super().__init__()
        self.branches = nn.ModuleList()
        for k, ds in zip(kernel_sizes, dilations):
            units = nn.ModuleList()
            for d in ds:
                act = AntiAliasedSnake(channels, taps) if antialiased else Snake(channels)
                units.append(nn.ModuleDict({"act": act, "conv": Conv1d(channels, channels, k, dilation=d)}))
            self.branches.append(units)

    def forward(self, x):
        out = 0
        for units in self.branches:
            y = x
            for unit in units:
                y = y + unit["conv"](unit["act"](y))
            out = out + y
        return out / len(self.branches)


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        config.validate()
        self.config = config
        ch = config.channels()
        self.pre = Conv1d(config.mel_bands, ch[0], 7)
        self.ups = nn.ModuleList(ConvTranspose1d(ch[i], ch[i + 1], r) for i, r in enumerate(config.upsample_rates))
        self.amps = nn.ModuleList(
            AMPBlock(ch[i + 1], config.amp_kernel_sizes, config.amp_dilations,
                     config.use_antialiased_activation, config.antialias_taps)
            for i in range(len(config.upsample_rates)))
        self.post_act = Snake(ch[-1])
        self.post = Conv1d(ch[-1], 1, 7)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        """``(B, mel_bands, frames)`` -> ``(B, frames * total_upsample)``."""
        squeeze = mel.dim() == 2
        if squeeze:
            mel = mel.unsqueeze(0)
        if mel.dim() != 3 or mel.shape[1] != self.config.mel_bands:
            raise ShapeError(f"generator expects {self.config.mel_bands} mel bands, got input "
                             f"shape {tuple(mel.shape)}")
        x = self.pre(mel)
        for up, amp in zip(self.ups, self.amps):
            x = amp(up(x))
        x = self.post(self.post_act(x))
        if self.config.output_tanh:
            # tanh rounds to exactly +-1 in float32 for |x| > ~9; keep the open interval
            lim = 1.0 - torch.finfo(x.dtype).eps / 2
            x = torch.tanh(x).clamp(-lim, lim)
        x = x[:, 0]
        return x[0] if squeeze else x


def build_generator(config: GeneratorConfig, seed: int = 0, dtype=torch.float32) -> Generator:
    g = Generator(config).to(dtype)
    init_weights(g, torch.Generator().manual_seed(seed))
    return g
