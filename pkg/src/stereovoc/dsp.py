"""Deterministic time-domain DSP: mid/side, width, downmix, sinc resampling, loudness."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .audio import AudioBuffer
from .errors import ChannelCountError, DimensionError, ParameterError, SilentInputError

KAISER_BETA = 8.6
DEFAULT_TAPS = 255


class NoSpatialContentWarning(UserWarning):
    """Raised when the side channel to be width-scaled is all zeros."""


@dataclass(frozen=True)
class WidthControl:
    """Side/mid energy ratio in decibels; ``alpha`` is the linear side gain."""

    gamma_db: float = 0.0

    @property
    def alpha(self) -> float:
        return 10.0 ** (self.gamma_db / 20.0)


def rms(x) -> float:
    a = x.samples if isinstance(x, AudioBuffer) else np.asarray(x)
    a = a.astype(np.float64, copy=False)
    if a.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(a * a)))


def _mono(x: AudioBuffer, what: str) -> np.ndarray:
    if x.channels != 1:
        raise ChannelCountError(f"{what} must be mono, got {x.channels} channels")
    return x.samples[0]


def mid_side_encode(stereo: AudioBuffer) -> tuple[AudioBuffer, AudioBuffer]:
    if stereo.channels != 2:
        raise ChannelCountError(f"mid/side encoding needs stereo input, got {stereo.channels} channel(s)")
    left, right = stereo.samples
    mid = (left + right) / 2
    side = (left - right) / 2
    return AudioBuffer.mono(mid, stereo.sample_rate), AudioBuffer.mono(side, stereo.sample_rate)


def mid_side_decode(mid: AudioBuffer, side: AudioBuffer) -> AudioBuffer:
    m, s = _mono(mid, "mid"), _mono(side, "side")
    if len(m) != len(s):
        raise DimensionError(f"mid/side lengths differ: {len(m)} vs {len(s)}")
    if mid.sample_rate != side.sample_rate:
        raise DimensionError(f"mid/side sample rates differ: {mid.sample_rate} vs {side.sample_rate}")
    return AudioBuffer.stereo(m + s, m - s, mid.sample_rate)


def downmix(stereo: AudioBuffer) -> AudioBuffer:
    if stereo.channels != 2:
        raise ChannelCountError(f"downmix needs stereo input, got {stereo.channels} channel(s)")
    left, right = stereo.samples
    return AudioBuffer.mono((left + right) / 2, stereo.sample_rate)


def apply_width(mid: AudioBuffer, side: AudioBuffer, ctl) -> AudioBuffer:
    """Energy-match ``side`` to ``mid`` and then scale it by ``ctl.alpha``.

    ``ctl`` may be a :class:`WidthControl` or a gain in dB. The mid channel
    is never touched. The result keeps the dtype of ``side``.
    """
    if not isinstance(ctl, WidthControl):
        ctl = WidthControl(float(ctl))
    m, s = _mono(mid, "mid"), _mono(side, "side")
    if len(m) != len(s):
        raise DimensionError(f"mid/side lengths differ: {len(m)} vs {len(s)}")
    side_rms = rms(s)
    if side_rms == 0.0:
        warnings.warn("side channel is all zeros: no spatial content to scale",
                      NoSpatialContentWarning, stacklevel=2)
        return AudioBuffer.mono(np.zeros_like(s), side.sample_rate)
    gain = ctl.alpha * rms(m) / side_rms
    out = (s.astype(np.float64) * gain).astype(s.dtype)
    return AudioBuffer.mono(out, side.sample_rate)


@lru_cache(maxsize=32)
def kaiser_sinc(taps: int, cutoff: float, beta: float = KAISER_BETA) -> np.ndarray:
    """Linear-phase low-pass; ``cutoff`` is a fraction of the Nyquist rate.

    Normalised to unity DC gain.
    """
    if taps < 1 or taps % 2 == 0:
        raise ParameterError(f"taps must be a positive odd integer, got {taps}")
    n = np.arange(taps) - (taps - 1) / 2
    h = cutoff * np.sinc(cutoff * n) * np.kaiser(taps, beta)
    h /= h.sum()
    h.setflags(write=False)
    return h


def _check_taps(taps: int):
    if taps % 2 == 0:
        raise ParameterError(f"taps must be odd, got {taps}")
    if taps < 31:
        raise ParameterError(f"taps must be >= 31, got {taps}")


def upsample2(x: np.ndarray, taps: int = DEFAULT_TAPS) -> np.ndarray:
    _check_taps(taps)
    x = np.asarray(x, dtype=np.float64)
    stuffed = np.zeros(2 * len(x))
    stuffed[::2] = x
    h = kaiser_sinc(taps, 0.5)
    delay = (taps - 1) // 2
    return 2.0 * signal.convolve(stuffed, h)[delay:delay + len(stuffed)]


def downsample2(x: np.ndarray, taps: int = DEFAULT_TAPS) -> np.ndarray:
    _check_taps(taps)
    x = np.asarray(x, dtype=np.float64)
    h = kaiser_sinc(taps, 0.5)
    delay = (taps - 1) // 2
    return signal.convolve(x, h)[delay:delay + len(x)][::2]


def sinc_resample(x: AudioBuffer, factor: str, taps: int = DEFAULT_TAPS) -> AudioBuffer:
    """Halve or double the sample rate of a mono buffer.

    ``factor`` is ``"up2"`` or ``"down2"``. The signal is treated as zero
    outside its support and the filter delay is removed, so the output has
    exactly ``2*N`` or ``ceil(N/2)`` samples. Output dtype follows input.
    """
    data = _mono(x, "resampler input")
    if factor == "up2":
        y, rate = upsample2(data, taps), x.sample_rate * 2
    elif factor == "down2":
        if x.sample_rate % 2:
            raise ParameterError(f"cannot halve odd sample rate {x.sample_rate}")
        y, rate = downsample2(data, taps), x.sample_rate // 2
    else:
        raise ParameterError(f"factor must be 'up2' or 'down2', got {factor!r}")
    return AudioBuffer.mono(y.astype(data.dtype), rate)


def loudness_gain(x: AudioBuffer, target_dbfs: float) -> float:
    level = rms(x)
    if level == 0.0:
        raise SilentInputError("silent input: no gain reaches the target level")
    return 10.0 ** (target_dbfs / 20.0) / level


def loudness_normalize(x: AudioBuffer, target_dbfs: float = -23.0) -> AudioBuffer:
    """Scale so the RMS over all channels sits at ``target_dbfs``."""
    gain = loudness_gain(x, target_dbfs)
    return AudioBuffer(x.samples * gain, x.sample_rate)
