"""Multi-period (MPD) and multi-band multi-resolution complex spectrogram
(MMSD) discriminators, combined into one ensemble of K sub-discriminators."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .. import autodiff as ad
from ..errors import ConfigError, ContractError
from ..spectral import StftConfig
from .layers import Conv2d, init_weights


@dataclass(frozen=True)
class DiscriminatorConfig:
    periods: tuple[int, ...] = (2, 3, 5, 7, 11)
    mpd_channels: tuple[int, ...] = (8, 16, 32, 32)
    mmsd_windows: tuple[int, ...] = (2048, 1024, 512)
    mmsd_bands: tuple[float, ...] = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0)
    mmsd_channels: int = 8

    def __post_init__(self):
        for name in ("periods", "mpd_channels", "mmsd_windows", "mmsd_bands"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self):
        b = self.mmsd_bands
        if len(b) < 2 or b[0] != 0.0 or b[-1] != 1.0 or any(x >= y for x, y in zip(b, b[1:])):
            raise ConfigError(f"mmsd_bands must increase strictly from 0.0 to 1.0, got {b}")
        if any(p < 1 for p in self.periods) or not (self.periods or self.mmsd_windows):
            raise ConfigError("need at least one sub-discriminator with positive period/window")
        if len(self.mpd_channels) < 2:
            raise ConfigError("mpd_channels needs at least two layers")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorConfig":
        return cls(**d)


def band_edges(n_bins: int, fractions) -> list[tuple[int, int]]:
    """Partition ``range(n_bins)`` into contiguous bands at the given fractions."""
    edges = [round(f * n_bins) for f in fractions]
    bands = list(zip(edges[:-1], edges[1:]))
    if any(hi <= lo for lo, hi in bands):
        raise ConfigError(f"band split {tuple(fractions)} leaves an empty band for {n_bins} bins")
    return bands


class PeriodDiscriminator(nn.Module):
    def __init__(self, period, channels):
        super().__init__()
        self.period = period
        chans = (1,) + tuple(channels)
        self.convs = nn.ModuleList()
        for i in range(len(channels)):
            stride = (3, 1) if i < len(channels) - 1 else (1, 1)
            self.convs.append(Conv2d(chans[i], chans[i + 1], (5, 1), stride, (2, 0)))
        self.post = Conv2d(chans[-1], 1, (3, 1), (1, 1), (1, 0))

    def reshape(self, wave: torch.Tensor) -> torch.Tensor:
        """``(B, T)`` -> ``(B, 1, ceil(T/p), p)`` after right reflect padding."""
        b, t = wave.shape
        p = self.period
        if t % p:
            wave = F.pad(wave.unsqueeze(1), (0, p - t % p), mode="reflect").squeeze(1)
        return wave.reshape(b, 1, -1, p)

    def forward(self, wave):
        x = self.reshape(wave)
        feats = []
        for conv in self.convs:
            x = ad.leaky_relu(conv(x))
            feats.append(x)
        x = self.post(x)
        feats.append(x)
        return x, feats


class BandDiscriminator(nn.Module):
    def __init__(self, window, fractions, channels):
        super().__init__()
        self.stft = StftConfig(window, window // 4)
        self.bands = band_edges(self.stft.n_bins, fractions)
        self.stacks = nn.ModuleList()
        for _ in self.bands:
            self.stacks.append(nn.ModuleList([
                Conv2d(2, channels, (3, 9)),
                Conv2d(channels, channels, (3, 9), (1, 2)),
                Conv2d(channels, channels, (3, 9), (1, 2)),
                Conv2d(channels, channels, (3, 9), (1, 2)),
                Conv2d(channels, channels, (3, 3)),
            ]))
        self.post = Conv2d(channels, 1, (3, 3))

    def spectrogram(self, wave):
        real, imag = ad.framed_dft(wave, self.stft)
        # (B, 2, frames, bins)
        return torch.stack([real, imag], dim=1).transpose(-1, -2)

    def forward(self, wave):
        spec = self.spectrogram(wave)
        feats, outs = [], []
        for (lo, hi), stack in zip(self.bands, self.stacks):
            x = spec[..., lo:hi]
            for conv in stack:
                x = ad.leaky_relu(conv(x))
                feats.append(x)
            outs.append(x)
        x = self.post(torch.cat(outs, dim=-1))
        feats.append(x)
        return x, feats


class DiscriminatorEnsemble(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.mpd = nn.ModuleList(PeriodDiscriminator(p, config.mpd_channels) for p in config.periods)
        self.mmsd = nn.ModuleList(BandDiscriminator(w, config.mmsd_bands, config.mmsd_channels)
                                  for w in config.mmsd_windows)

    def __len__(self):
        return len(self.mpd) + len(self.mmsd)

    @staticmethod
    def _as_batch(wave):
        if wave.dim() == 1:
            return wave.unsqueeze(0)
        if wave.dim() == 3:
            if wave.shape[1] != 1:
                raise ContractError(f"discriminators take 1-channel audio, got shape {tuple(wave.shape)}")
            return wave[:, 0]
        return wave

    def mpd_forward(self, wave):
        wave = self._as_batch(wave)
        if self.mpd and wave.shape[-1] < max(self.config.periods):
            raise ContractError(f"input of {wave.shape[-1]} samples is shorter than the largest "
                                f"period {max(self.config.periods)}")
        return [d(wave) for d in self.mpd]

    def mmsd_forward(self, wave):
        wave = self._as_batch(wave)
        if self.mmsd and wave.shape[-1] < max(self.config.mmsd_windows):
            raise ContractError(f"input of {wave.shape[-1]} samples is shorter than the largest "
                                f"window {max(self.config.mmsd_windows)}")
        return [d(wave) for d in self.mmsd]

    def forward(self, wave):
        """List of ``(score_map, features)``, MPD entries first."""
        return self.mpd_forward(wave) + self.mmsd_forward(wave)


def build_discriminator(config: DiscriminatorConfig, seed: int = 0, dtype=torch.float32) -> DiscriminatorEnsemble:
    d = DiscriminatorEnsemble(config).to(dtype)
    init_weights(d, torch.Generator().manual_seed(seed))
    return d
