"""Per-stage frontends and sample rates for vocoder, BWE and M2S."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .nets import GeneratorConfig
from .spectral import MelConfig, StftConfig

HIGH_RATE = 44100
LOW_RATE = 22050


@dataclass(frozen=True)
class Stage:
    name: str
    input_rate: int  # rate of the audio the mel frontend sees
    output_rate: int
    stft: StftConfig
    mel: MelConfig

    @property
    def rate_ratio(self) -> int:
        return self.output_rate // self.input_rate

    @property
    def samples_per_frame(self) -> int:
        return self.stft.hop_size * self.rate_ratio

    def generator_config(self, **overrides) -> GeneratorConfig:
        base = dict(mel_bands=self.mel.n_mels, base_channels=24 if self.name == "bwe" else 32,
                    frame_hop=self.stft.hop_size, rate_ratio=self.rate_ratio)
        base.update(overrides)
        return GeneratorConfig(**base)

    def check_generator(self, cfg: GeneratorConfig):
        if cfg.mel_bands != self.mel.n_mels:
            raise ConfigError(f"{self.name}: generator takes {cfg.mel_bands} mel bands, "
                              f"frontend produces {self.mel.n_mels}")
        if cfg.total_upsample != self.samples_per_frame:
            raise ConfigError(f"{self.name}: generator upsamples by {cfg.total_upsample}, "
                              f"stage needs {self.samples_per_frame} samples per frame")

    def to_meta(self) -> dict:
        return {"stage": self.name}


VOCODER = Stage("vocoder", LOW_RATE, LOW_RATE, StftConfig(1024, 256), MelConfig(128, LOW_RATE))
# half window and hop on the low-rate signal: twice the frames, one frame -> 256 high-rate samples
BWE = Stage("bwe", LOW_RATE, HIGH_RATE, StftConfig(512, 128), MelConfig(128, LOW_RATE))
M2S = Stage("m2s", HIGH_RATE, HIGH_RATE, StftConfig(1024, 256), MelConfig(128, HIGH_RATE))

STAGES = {s.name: s for s in (VOCODER, BWE, M2S)}


def get_stage(name: str) -> Stage:
    try:
        return STAGES[name]
    except KeyError:
        raise ConfigError(f"unknown stage {name!r}; expected one of {sorted(STAGES)}") from None
