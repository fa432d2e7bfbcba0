"""Inference: mel -> mono 22.05 kHz -> mono 44.1 kHz -> stereo 44.1 kHz."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .audio import AudioBuffer
from .errors import StageError, StereoVocError
from .nets import Generator, build_generator, load_checkpoint
from .objectives import generate
from .spectral import MelSpec
from .stages import BWE, M2S, VOCODER, Stage, get_stage
from .trainer import stage_mel


@dataclass
class StageModel:
    generator: Generator
    stage: Stage
    source: Path | None = None

    def __post_init__(self):
        self.stage.check_generator(self.generator.config)
        self.generator.eval()

    def run(self, mel: np.ndarray, length: int) -> np.ndarray:
        """Generator output as float32, trimmed or zero-padded to ``length``."""
        with torch.no_grad():
            x = torch.as_tensor(np.asarray(mel), dtype=torch.float32)
            return generate(self.generator, x, length).numpy()


@dataclass
class CascadeModels:
    vocoder: StageModel
    bwe: StageModel
    m2s: StageModel

    def __post_init__(self):
        chain = [self.vocoder.stage, self.bwe.stage, self.m2s.stage]
        for want, got in zip((VOCODER, BWE, M2S), chain):
            if got.name != want.name:
                raise StageError(f"expected a {want.name} model in the {want.name} slot, got {got.name}")
        for a, b in zip(chain, chain[1:]):
            if a.output_rate != b.input_rate:
                raise StageError(f"{a.name} outputs {a.output_rate} Hz but {b.name} expects {b.input_rate} Hz")


def load_stage(path, expect: str | None = None) -> StageModel:
    net, meta = load_checkpoint(path)
    if not isinstance(net, Generator):
        raise StageError(f"{path}: checkpoint holds a discriminator, not a generator")
    name = meta.get("stage")
    if name is None:
        raise StageError(f"{path}: checkpoint does not record its stage")
    if expect is not None and name != expect:
        raise StageError(f"{path}: checkpoint is a {name} model, expected {expect}")
    return StageModel(net, get_stage(name), Path(path))


def load_cascade(vocoder, bwe, m2s) -> CascadeModels:
    return CascadeModels(load_stage(vocoder, "vocoder"), load_stage(bwe, "bwe"), load_stage(m2s, "m2s"))


def zero_stage(stage: Stage, **overrides) -> StageModel:
    """A stage whose generator has all weights and biases at zero."""
    g = build_generator(stage.generator_config(**overrides))
    with torch.no_grad():
        for p in g.parameters():
            p.zero_()
    return StageModel(g, stage)


def _pick(models, name: str) -> StageModel:
    model = getattr(models, name) if isinstance(models, CascadeModels) else models
    if model.stage.name != name:
        raise StageError(f"{name} step given a {model.stage.name} model")
    return model


def vocode(models, mel) -> AudioBuffer:
    """Mel (``MelSpec`` or ``(n_mels, frames)`` matrix) to mono 22.05 kHz."""
    model = _pick(models, "vocoder")
    stage = model.stage
    if isinstance(mel, MelSpec):
        if mel.stft_config != stage.stft or mel.mel_config != stage.mel:
            raise StageError(f"vocoder: mel frontend {mel.stft_config}/{mel.mel_config} does not match "
                             f"{stage.stft}/{stage.mel}")
        mel = mel.values
    mel = np.asarray(mel)
    if mel.ndim != 2 or mel.shape[0] != stage.mel.n_mels:
        raise StageError(f"vocoder: expected a ({stage.mel.n_mels}, frames) mel matrix, got shape {mel.shape}")
    wave = model.run(mel, mel.shape[1] * stage.samples_per_frame)
    return AudioBuffer.mono(wave, stage.output_rate)


def bwe(models, low: AudioBuffer) -> AudioBuffer:
    """Generated high band plus the 2x sinc-interpolated input."""
    model = _pick(models, "bwe")
    stage = model.stage
    if low.sample_rate != stage.input_rate:
        raise StageError(f"bwe: input is {low.sample_rate} Hz, expected {stage.input_rate} Hz")
    residual = dsp.sinc_resample(low, "up2").data
    generated = model.run(stage_mel(stage, low), len(residual))
    return AudioBuffer.mono(generated.astype(residual.dtype) + residual, stage.output_rate)


def m2s(models, mono: AudioBuffer, gamma_db: float = 0.0, dtype=np.float64) -> AudioBuffer:
    """Upmix keeping ``mono`` as the mid channel.

    The generated side is float32; with ``dtype=float64`` and a
    float32-representable ``mono``, downmixing the result gives ``mono`` back
    bit for bit.
    """
    model = _pick(models, "m2s")
    stage = model.stage
    if mono.channels != 1:
        raise StageError(f"m2s: expected mono input, got {mono.channels} channels")
    if mono.sample_rate != stage.input_rate:
        raise StageError(f"m2s: input is {mono.sample_rate} Hz, expected {stage.input_rate} Hz")
    side = AudioBuffer.mono(model.run(stage_mel(stage, mono), len(mono)), mono.sample_rate)
    side = dsp.apply_width(mono, side, gamma_db)
    return dsp.mid_side_decode(mono.astype(dtype), side.astype(dtype))


def full_cascade(models: CascadeModels, mel, gamma_db: float = 0.0, dtype=np.float64) -> AudioBuffer:
    steps = (("vocoder", lambda x: vocode(models, x)),
             ("bwe", lambda x: bwe(models, x)),
             ("m2s", lambda x: m2s(models, x, gamma_db, dtype)))
    x = mel
    for name, fn in steps:
        try:
            x = fn(x)
        except StageError:
            raise
        except StereoVocError as exc:
            raise StageError(f"{name}: {exc}") from exc
    return x
