"""Mel vocoding, residual bandwidth extension and downmix-compatible stereo upmixing."""

from .audio import AudioBuffer, read_wav, write_wav
from .dsp import (WidthControl, apply_width, downmix, loudness_normalize, mid_side_decode, mid_side_encode,
                  sinc_resample)
from .errors import StereoVocError
from .spectral import MelConfig, MelSpec, StftConfig, log_mel, stft

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "MelConfig",
    "MelSpec",
    "StereoVocError",
    "StftConfig",
    "WidthControl",
    "apply_width",
    "downmix",
    "log_mel",
    "loudness_normalize",
    "mid_side_decode",
    "mid_side_encode",
    "read_wav",
    "sinc_resample",
    "stft",
    "write_wav",
]
