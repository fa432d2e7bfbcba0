"""Objective evaluation: Mel-D, STFT-D, SI-SDR, band-split scores and RTF.

Mel-D and STFT-D are this package's own fixed definitions; their absolute
values are only comparable with each other.
"""

from __future__ import annotations

import json
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .audio import AudioBuffer, read_wav
from .errors import ContractError, EvalError, ConfigError
from .spectral import MelConfig, StftConfig, default_loss_configs, hz_to_mel, log_mel, stft
from .stages import M2S

log = logging.getLogger(__name__)

STFT_D_WINDOWS = (2048, 1024, 512)
MAG_FLOOR = 1e-5
SI_SDR_CAP = 100.0
BAND_SPLIT_HZ = 11025.0


def stft_d_configs():
    return [StftConfig(w, w // 4) for w in STFT_D_WINDOWS]


def _pair(ref: AudioBuffer, est: AudioBuffer) -> tuple[np.ndarray, np.ndarray]:
    if ref.sample_rate != est.sample_rate:
        raise EvalError(f"sample rates differ: ref {ref.sample_rate} Hz, est {est.sample_rate} Hz")
    r, e = ref.data.astype(np.float64), est.data.astype(np.float64)
    if len(r) != len(e):
        n = min(len(r), len(e))
        warnings.warn(f"length mismatch ({len(r)} vs {len(e)}); trimming to {n}", stacklevel=3)
        r, e = r[:n], e[:n]
    return r, e


def _mel_configs(sr: int, f_lo: float | None = None, f_hi: float | None = None):
    configs = default_loss_configs(sr)
    if f_lo is None:
        return configs
    full = hz_to_mel(sr / 2)
    out = []
    for s, m in configs:
        n = max(1, round(m.n_mels * float(hz_to_mel(f_hi) - hz_to_mel(f_lo)) / float(full)))
        out.append((s, MelConfig(n, sr, f_lo, f_hi, m.log_floor)))
    return out


def _mel_d(r, e, configs):
    return float(np.mean([np.mean(np.abs(log_mel(r, s, m).values - log_mel(e, s, m).values))
                          for s, m in configs]))


def mel_distance(ref: AudioBuffer, est: AudioBuffer) -> float:
    """Mean over six resolutions of the mean absolute log-mel difference."""
    r, e = _pair(ref, est)
    return _mel_d(r, e, _mel_configs(ref.sample_rate))


def _stft_d(r, e, sr, bin_mask=None):
    if not np.any(r):
        raise EvalError("reference is silent: spectral convergence is undefined")
    terms = []
    for cfg in stft_d_configs():
        R, E = np.abs(stft(r, cfg).bins), np.abs(stft(e, cfg).bins)
        if bin_mask is not None:
            keep = bin_mask(np.arange(cfg.n_bins) * sr / cfg.fft_size)
            R, E = R[keep], E[keep]
        ref_norm = np.linalg.norm(R)
        if ref_norm == 0:
            raise EvalError("reference has no energy in the scored band")
        sc = np.linalg.norm(R - E) / ref_norm
        lm = np.mean(np.abs(np.log(np.maximum(R, MAG_FLOOR)) - np.log(np.maximum(E, MAG_FLOOR))))
        terms.append(sc + lm)
    return float(np.mean(terms))


def stft_distance(ref: AudioBuffer, est: AudioBuffer) -> float:
    """Mean over resolutions of spectral convergence plus mean log-magnitude L1."""
    r, e = _pair(ref, est)
    return _stft_d(r, e, ref.sample_rate)


def si_sdr(ref: AudioBuffer, est: AudioBuffer) -> float:
    r, e = _pair(ref, est)
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0:
        raise EvalError("reference is all zeros: SI-SDR is undefined")
    target = (np.dot(e, r) / ref_energy) * r
    noise = target - e
    t, n = float(np.dot(target, target)), float(np.dot(noise, noise))
    if t == 0:
        return -SI_SDR_CAP
    if n <= 1e-20 * t:
        return SI_SDR_CAP
    return float(np.clip(10 * np.log10(t / n), -SI_SDR_CAP, SI_SDR_CAP))


@dataclass(frozen=True)
class BandScores:
    mel_low: float
    mel_high: float
    stft_low: float
    stft_high: float


def band_split_scores(ref: AudioBuffer, est: AudioBuffer, split_hz: float = BAND_SPLIT_HZ) -> BandScores:
    """Mel-D and STFT-D restricted below and above ``split_hz``."""
    nyq = ref.sample_rate / 2
    if not 0 < split_hz < nyq:
        raise ConfigError(f"split {split_hz} Hz is outside (0, {nyq}) Hz")
    r, e = _pair(ref, est)
    sr = ref.sample_rate
    return BandScores(
        mel_low=_mel_d(r, e, _mel_configs(sr, 0.0, split_hz)),
        mel_high=_mel_d(r, e, _mel_configs(sr, split_hz, nyq)),
        stft_low=_stft_d(r, e, sr, lambda f: f < split_hz),
        stft_high=_stft_d(r, e, sr, lambda f: f >= split_hz),
    )


def rtf(audio_seconds: float, wall_seconds: float) -> float:
    """Seconds of audio processed per second of wall-clock time."""
    if wall_seconds <= 0:
        raise ContractError(f"wall time must be positive, got {wall_seconds}")
    return audio_seconds / wall_seconds


def dsp_path_rtf(seconds: float = 30.0, gamma_db: float = -6.0, seed: int = 0) -> float:
    """RTF of the network-free path: 2x resampling, M2S mel frontend, width, mid/side."""
    rng = np.random.default_rng(seed)
    low_rate = M2S.input_rate // 2
    n = int(seconds * low_rate)
    t = np.arange(n) / low_rate
    low = AudioBuffer.mono(0.3 * np.sin(2 * np.pi * 220 * t) + 0.05 * rng.standard_normal(n), low_rate)
    start = time.perf_counter()
    mono = dsp.sinc_resample(low, "up2")
    log_mel(mono, M2S.stft, M2S.mel)
    side = AudioBuffer.mono(np.roll(mono.data, 17) - mono.data, mono.sample_rate)
    stereo = dsp.mid_side_decode(mono, dsp.apply_width(mono, side, gamma_db))
    dsp.downmix(stereo)
    return rtf(len(mono) / mono.sample_rate, time.perf_counter() - start)


@dataclass
class EvalReport:
    mel_d: float
    stft_d: float
    si_sdr: float | None
    low_band: dict | None = None
    high_band: dict | None = None
    rtf: float | None = None


def evaluate(ref: AudioBuffer, est: AudioBuffer, band_split: bool = False) -> EvalReport:
    try:
        sdr = si_sdr(ref, est)
    except EvalError:
        sdr = None
    rep = EvalReport(mel_d=mel_distance(ref, est), stft_d=stft_distance(ref, est), si_sdr=sdr)
    if band_split:
        b = band_split_scores(ref, est)
        rep.low_band = {"mel_d": b.mel_low, "stft_d": b.stft_low}
        rep.high_band = {"mel_d": b.mel_high, "stft_d": b.stft_high}
    return rep


def evaluate_files(ref_path, est_path, band_split: bool = False) -> list[dict]:
    """One record per scored channel: ``mono``, or ``mid`` and ``side`` for stereo."""
    ref, est = read_wav(ref_path), read_wav(est_path)
    if ref.channels != est.channels:
        raise EvalError(f"{est_path}: {est.channels} channel(s), reference {ref_path} has {ref.channels}")
    if ref.channels == 1:
        channels = {"mono": (ref, est)}
    else:
        (rm, rs), (em, es) = dsp.mid_side_encode(ref), dsp.mid_side_encode(est)
        channels = {"mid": (rm, em), "side": (rs, es)}
    records = []
    for label, (r, e) in channels.items():
        try:
            rec = asdict(evaluate(r, e, band_split))
        except EvalError as exc:
            raise EvalError(f"{est_path} ({label}): {exc}") from exc
        records.append({"file": Path(ref_path).name, "channel": label, **rec})
    return records


def _summary(records: list[dict]) -> dict:
    out = {}
    for key in ("mel_d", "stft_d", "si_sdr"):
        vals = [r[key] for r in records if r.get(key) is not None]
        if vals:
            out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    return out


def evaluate_dirs(ref_dir, est_dir, band_split: bool = False, workers: int | None = None) -> tuple[list[dict], dict]:
    ref_dir, est_dir = Path(ref_dir), Path(est_dir)
    refs = sorted(ref_dir.glob("*.wav"))
    if not refs:
        raise EvalError(f"{ref_dir}: no .wav files")
    missing = [p.name for p in refs if not (est_dir / p.name).exists()]
    if missing:
        raise EvalError(f"{est_dir}: missing estimates for {', '.join(missing)}")
    if workers is None:
        workers = int(os.environ.get("MUSICHIFI_THREADS", "1") or 1)
    jobs = [(p, est_dir / p.name) for p in refs]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: evaluate_files(*j, band_split), jobs))
    else:
        parts = [evaluate_files(r, e, band_split) for r, e in jobs]
    records = [rec for part in parts for rec in part]
    summary = {"summary": _summary(records), "files": len(refs), "dsp_rtf": dsp_path_rtf()}
    return records, summary


def write_report(path, records: list[dict], summary: dict) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.write(json.dumps(summary, sort_keys=True) + "\n")
