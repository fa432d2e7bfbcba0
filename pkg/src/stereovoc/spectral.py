"""STFT and log-mel frontends.

Mel scale is HTK (``2595 * log10(1 + f / 700)``) with peak-normalised
triangles. Magnitudes are clamped at ``log_floor`` before the natural log.
"""

from __future__ import annotations

import json
import pickle
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio import AudioBuffer
from .errors import ConfigError, FormatError


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 1024
    hop_size: int = 256
    fft_size: int | None = None
    center: bool = True
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size is None:
            object.__setattr__(self, "fft_size", self.window_size)
        if not 0 < self.hop_size <= self.window_size <= self.fft_size:
            raise ConfigError(
                f"need 0 < hop_size <= window_size <= fft_size, got "
                f"{self.hop_size}/{self.window_size}/{self.fft_size}")
        if self.window_size % 2:
            raise ConfigError(f"window_size must be even, got {self.window_size}")
        if self.window not in ("hann", "rect"):
            raise ConfigError(f"unknown window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, length: int) -> int:
        padded = length + (self.window_size if self.center else 0)
        return (padded - self.window_size) // self.hop_size + 1


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 128
    sample_rate: int = 22050
    f_min: float = 0.0
    f_max: float | None = None
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.f_max is None:
            object.__setattr__(self, "f_max", self.sample_rate / 2)
        if not 0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ConfigError(f"need 0 <= f_min < f_max <= sample_rate/2, got "
                              f"f_min={self.f_min}, f_max={self.f_max}, sample_rate={self.sample_rate}")
        if self.n_mels < 1:
            raise ConfigError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ConfigError(f"log_floor must be positive, got {self.log_floor}")


@dataclass(frozen=True, eq=False)
class ComplexSpec:
    bins: np.ndarray  # (n_bins, frames), complex
    config: StftConfig

    @property
    def frames(self) -> int:
        return self.bins.shape[1]


@dataclass(frozen=True, eq=False)
class MelSpec:
    values: np.ndarray  # (n_mels, frames), natural-log magnitudes
    stft_config: StftConfig
    mel_config: MelConfig

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@lru_cache(maxsize=64)
def window(cfg: StftConfig) -> np.ndarray:
    n = cfg.window_size
    if cfg.window == "rect":
        w = np.ones(n)
    else:
        w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Return ``(frames, window_size)`` un-windowed frames."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 1:
        raise ConfigError("signal must contain at least one sample")
    if cfg.center:
        half = cfg.window_size // 2
        x = np.pad(x, half, mode="reflect") if len(x) > 1 else np.pad(x, half, mode="edge")
    if len(x) < cfg.window_size:
        raise ConfigError(f"signal of {len(x)} samples is shorter than window {cfg.window_size}")
    n = (len(x) - cfg.window_size) // cfg.hop_size + 1
    return np.lib.stride_tricks.sliding_window_view(x, cfg.window_size)[::cfg.hop_size][:n]


def stft(x, cfg: StftConfig) -> ComplexSpec:
    data = x.data if isinstance(x, AudioBuffer) else np.asarray(x)
    frames = frame_signal(data, cfg) * window(cfg)
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return ComplexSpec(spec.T, cfg)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(mel_cfg: MelConfig) -> np.ndarray:
    """``n_mels + 2`` edge frequencies; entries 1..n_mels are filter centres."""
    mels = np.linspace(hz_to_mel(mel_cfg.f_min), hz_to_mel(mel_cfg.f_max), mel_cfg.n_mels + 2)
    return mel_to_hz(mels)


@lru_cache(maxsize=64)
def mel_filterbank(stft_cfg: StftConfig, mel_cfg: MelConfig) -> np.ndarray:
    """``(n_mels, n_bins)`` triangular filters, each scaled to peak at 1.0.

    A filter too narrow to contain a bin becomes a single tap at the bin
    nearest its centre; more bands than bin edges is rejected outright.
    """
    if mel_cfg.n_mels + 2 > stft_cfg.n_bins:
        raise ConfigError(f"n_mels={mel_cfg.n_mels} is too large for {stft_cfg.n_bins} "
                          f"frequency bins (fft_size={stft_cfg.fft_size})")
    freqs = np.arange(stft_cfg.n_bins) * mel_cfg.sample_rate / stft_cfg.fft_size
    edges = mel_band_edges(mel_cfg)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1, keepdims=True)
    fb = np.divide(fb, peaks, out=np.zeros_like(fb), where=peaks > 0)
    # a triangle narrower than the bin spacing may contain no bin at all;
    # give it a unit tap at the bin nearest its centre rather than a dead row
    for row in np.flatnonzero(peaks[:, 0] == 0):
        fb[row, np.argmin(np.abs(freqs - edges[row + 1]))] = 1.0
    fb.setflags(write=False)
    return fb


def log_mel(x, stft_cfg: StftConfig, mel_cfg: MelConfig) -> MelSpec:
    if isinstance(x, AudioBuffer):
        if x.sample_rate != mel_cfg.sample_rate:
            raise ConfigError(f"signal rate {x.sample_rate} Hz does not match mel config "
                              f"rate {mel_cfg.sample_rate} Hz")
        x = x.data
    mag = np.abs(stft(x, stft_cfg).bins)
    mel = mel_filterbank(stft_cfg, mel_cfg) @ mag
    return MelSpec(np.log(np.maximum(mel, mel_cfg.log_floor)), stft_cfg, mel_cfg)


def multi_res_mels(x, configs) -> list[MelSpec]:
    configs = list(configs)
    if not configs:
        raise ConfigError("multi-resolution mel needs at least one config")
    return [log_mel(x, s, m) for s, m in configs]


LOSS_WINDOWS = (2048, 1024, 512, 256, 128, 64)
LOSS_MELS = (128, 128, 64, 64, 32, 16)


def default_loss_configs(sample_rate: int) -> list[tuple[StftConfig, MelConfig]]:
    """Six resolutions, hop = window / 4, used by the reconstruction loss and Mel-D."""
    return [(StftConfig(w, w // 4), MelConfig(m, sample_rate)) for w, m in zip(LOSS_WINDOWS, LOSS_MELS)]


# --- config and matrix files -------------------------------------------------

def config_to_dict(cfg) -> dict:
    return asdict(cfg)


def configs_to_json(configs) -> str:
    return json.dumps([{"stft": asdict(s), "mel": asdict(m)} for s, m in configs], indent=2)


def configs_from_json(text: str) -> list[tuple[StftConfig, MelConfig]]:
    try:
        items = json.loads(text)
        return [(StftConfig(**it["stft"]), MelConfig(**it["mel"])) for it in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed spectral config: {exc}") from exc


def save_matrix(path, matrix) -> None:
    """Dump a 2-D matrix as ``.npy`` (header carries shape and dtype)."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise FormatError(f"expected a 2-D matrix, got shape {matrix.shape}")
    with open(path, "wb") as fh:
        np.save(fh, matrix, allow_pickle=False)


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        m = np.load(path, allow_pickle=False)
    except (ValueError, OSError, EOFError, pickle.UnpicklingError) as exc:
        raise FormatError(f"{path}: not a matrix file ({exc})") from exc
    if not isinstance(m, np.ndarray) or m.ndim != 2:
        raise FormatError(f"{path}: expected a 2-D matrix")
    return m
