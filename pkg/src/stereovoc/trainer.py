"""Alternating GAN training for a single stage at desk scale."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .audio import AudioBuffer
from .errors import ConfigError, DataError, TrainingDivergedError
from .nets import (DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator,
                   save_checkpoint)
from .objectives import LossWeights, discriminator_objective, generate, generator_objective
from .spectral import default_loss_configs, log_mel
from .stages import HIGH_RATE, Stage, get_stage

log = logging.getLogger(__name__)

CROP_LENGTH = 16384


@dataclass(frozen=True)
class StagePrep:
    """``crop_length`` counts samples of the stage's target signal."""

    stage: str
    crop_length: int = CROP_LENGTH

    def __post_init__(self):
        get_stage(self.stage)
        if self.crop_length < 1:
            raise ConfigError(f"crop_length must be positive, got {self.crop_length}")

    @property
    def spec(self) -> Stage:
        return get_stage(self.stage)

    @property
    def source_length(self) -> int:
        """Samples of the 44.1 kHz stereo clip one crop consumes."""
        return 2 * self.crop_length if self.stage == "vocoder" else self.crop_length


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 2e-4
    betas: tuple[float, float] = (0.8, 0.99)
    seed: int = 0
    validation_every: int = 500
    lambda_fm: float = 1.0
    lambda_rc: float = 360.0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if self.steps < 1 or self.batch_size < 1 or self.validation_every < 1:
            raise ConfigError("steps, batch_size and validation_every must all be >= 1")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_fm, self.lambda_rc)


@dataclass(frozen=True, eq=False)
class TrainingPair:
    """One crop prepared for a stage.

    ``mel`` is the generator input, ``target`` the waveform it should
    produce, ``residual`` the sinc-upsampled skip path (BWE only) and
    ``source`` the waveform ``mel`` was computed from.
    """

    mel: np.ndarray
    target: AudioBuffer
    source: AudioBuffer
    residual: np.ndarray | None = None

    @property
    def input(self):
        return self.source if self.residual is not None else self.mel


def stage_mel(stage: Stage, x: AudioBuffer) -> np.ndarray:
    """Log-mel of ``x`` cut to ``ceil(len / hop)`` frames."""
    frames = -(-len(x) // stage.stft.hop_size)
    return log_mel(x, stage.stft, stage.mel).values[:, :frames]


def _as_stereo(clip: AudioBuffer) -> AudioBuffer:
    if clip.sample_rate != HIGH_RATE:
        raise DataError(f"training clips must be {HIGH_RATE} Hz, got {clip.sample_rate} Hz")
    if clip.channels == 1:
        return AudioBuffer.stereo(clip.data, clip.data, clip.sample_rate)
    return clip


def make_pair(prep: StagePrep, clip: AudioBuffer, offset: int = 0) -> TrainingPair:
    """Crop ``clip`` (44.1 kHz) at ``offset`` and apply the stage preprocessing."""
    clip = _as_stereo(clip)
    need = prep.source_length
    if len(clip) < need:
        raise DataError(f"clip of {len(clip)} samples is shorter than the {need} samples a "
                        f"{prep.stage} crop needs")
    if not 0 <= offset <= len(clip) - need:
        raise DataError(f"offset {offset} out of range for a clip of {len(clip)} samples")
    stage = prep.spec
    if prep.stage == "vocoder":
        # resample a margin around the crop so the filter sees real context
        margin = dsp.DEFAULT_TAPS + 1
        start = max(0, offset - margin) & ~1
        stop = min(len(clip), offset + need + margin)
        mono = dsp.downmix(AudioBuffer(clip.samples[:, start:stop], clip.sample_rate))
        low = dsp.sinc_resample(mono, "down2").data
        begin = (offset - start) // 2
        target = AudioBuffer.mono(low[begin:begin + prep.crop_length], stage.input_rate)
        return TrainingPair(stage_mel(stage, target), target, target)
    seg = AudioBuffer(clip.samples[:, offset:offset + need], clip.sample_rate)
    if prep.stage == "bwe":
        target = dsp.downmix(seg)
        low = dsp.sinc_resample(target, "down2")
        residual = dsp.sinc_resample(low, "up2").data
        return TrainingPair(stage_mel(stage, low), target, low, residual)
    mid, side = dsp.mid_side_encode(seg)
    return TrainingPair(stage_mel(stage, mid), side, mid)


@dataclass
class TrainResult:
    out_dir: Path
    history: list[dict] = field(default_factory=list)
    validations: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    best: Path | None = None
    generator: torch.nn.Module | None = None

    def series(self, key: str) -> list[float]:
        return [h[key] for h in self.history]


def _batch(pairs, dtype=torch.float32):
    mel = torch.tensor(np.stack([p.mel for p in pairs]), dtype=dtype)
    target = torch.tensor(np.stack([p.target.data for p in pairs]), dtype=dtype)
    residual = None
    if pairs[0].residual is not None:
        residual = torch.tensor(np.stack([p.residual for p in pairs]), dtype=dtype)
    return mel, target, residual


def stft_validation(generator, pairs) -> float:
    from .metrics import stft_distance

    scores = []
    with torch.no_grad():
        for p in pairs:
            mel, target, residual = _batch([p])
            out = generate(generator, mel, target.shape[-1], residual)[0].double().numpy()
            scores.append(stft_distance(p.target, AudioBuffer.mono(out, p.target.sample_rate)))
    return float(np.mean(scores))


class _PairSource:
    """Draws crops in a seed-fixed order and memoises their preprocessing."""

    def __init__(self, prep: StagePrep, dataset, rng: np.random.Generator):
        self.prep, self.rng = prep, rng
        self.clips = [_as_stereo(c) for c in dataset]
        if not self.clips:
            raise DataError("dataset is empty")
        for i, c in enumerate(self.clips):
            if len(c) < prep.source_length:
                raise DataError(f"clip {i} has {len(c)} samples, a {prep.stage} crop needs "
                                f"{prep.source_length}")
        self.cache = {}

    def get(self, idx: int, offset: int) -> TrainingPair:
        key = (idx, offset)
        if key not in self.cache:
            if len(self.cache) > 4096:
                self.cache.clear()
            self.cache[key] = make_pair(self.prep, self.clips[idx], offset)
        return self.cache[key]

    def draw(self, n: int) -> list[TrainingPair]:
        out = []
        for _ in range(n):
            idx = int(self.rng.integers(len(self.clips)))
            span = len(self.clips[idx]) - self.prep.source_length
            offset = int(self.rng.integers(span + 1)) if span > 0 else 0
            if self.prep.stage == "vocoder":
                offset &= ~1
            out.append(self.get(idx, offset))
        return out


def _param_digest(module) -> list[float]:
    return [float(p.detach().double().sum()) for p in module.parameters()]


def train(stage: str, dataset, gen_cfg: GeneratorConfig | None = None, train_cfg: TrainConfig = TrainConfig(),
          out_dir=None, disc_cfg: DiscriminatorConfig | None = None, validation=None,
          crop_length: int = CROP_LENGTH, check_isolation: bool = False) -> TrainResult:
    """Train one stage; write per-step JSON log lines and checkpoints into ``out_dir``.

    ``validation`` is a list of clips (defaults to ``dataset``), each
    evaluated at offset 0.
    """
    prep = StagePrep(stage, crop_length)
    spec = prep.spec
    gen_cfg = gen_cfg or spec.generator_config()
    spec.check_generator(gen_cfg)
    disc_cfg = disc_cfg or DiscriminatorConfig()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    torch.set_num_threads(1)
    torch.manual_seed(train_cfg.seed)
    rng = np.random.default_rng(train_cfg.seed)
    source = _PairSource(prep, dataset, rng)
    val_pairs = [make_pair(prep, _as_stereo(c), 0) for c in (validation if validation is not None else source.clips)]

    gen = build_generator(gen_cfg, seed=train_cfg.seed)
    disc = build_discriminator(disc_cfg, seed=train_cfg.seed + 1)
    opt_g = torch.optim.Adam(gen.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=train_cfg.lr, betas=train_cfg.betas)
    rc_configs = default_loss_configs(spec.output_rate)
    weights = train_cfg.weights

    result = TrainResult(out_dir=out_dir, generator=gen)
    log_fh = open(out_dir / "train.log", "w") if out_dir is not None else None
    best_score = math.inf
    meta_base = {"stage": stage, "train": asdict(train_cfg), "crop_length": crop_length}
    try:
        for step in range(1, train_cfg.steps + 1):
            mel, target, residual = _batch(source.draw(train_cfg.batch_size))
            fake = generate(gen, mel, target.shape[-1], residual)

            g_before = _param_digest(gen) if check_isolation else None
            loss_d, adv_d_k = discriminator_objective(disc, target, fake)
            opt_d.zero_grad(set_to_none=True)
            loss_d.backward()
            opt_d.step()
            if check_isolation and _param_digest(gen) != g_before:
                raise AssertionError(f"step {step}: discriminator update changed generator parameters")

            d_before = _param_digest(disc) if check_isolation else None
            report = generator_objective(gen, disc, target, mel, weights, rc_configs, x_fake=fake)
            report.adv_d, report.adv_d_k = loss_d.item(), adv_d_k
            if not math.isfinite(report.total_g):
                raise TrainingDivergedError(
                    f"step {step}: non-finite generator loss (adv_g={report.adv_g}, fm={report.fm}, "
                    f"rc={report.rc}, adv_d={report.adv_d})")
            opt_g.zero_grad(set_to_none=True)
            report.total.backward()
            opt_g.step()
            if check_isolation and _param_digest(disc) != d_before:
                raise AssertionError(f"step {step}: generator update changed discriminator parameters")

            rec = report.record(step=step)
            result.history.append(rec)
            if log_fh:
                log_fh.write(json.dumps(rec, sort_keys=True) + "\n")

            if step % train_cfg.validation_every == 0 or step == train_cfg.steps:
                gen.eval()
                score = stft_validation(gen, val_pairs)
                gen.train()
                val = {"event": "validation", "step": step, "val_stft_d": score}
                if out_dir is not None:
                    path = out_dir / f"g_{step:07d}.ckpt"
                    save_checkpoint(gen, path, dict(meta_base, step=step, val_stft_d=score))
                    result.checkpoints.append(path)
                    val["checkpoint"] = path.name
                    if score < best_score:
                        result.best = path
                result.validations.append(val)
                best_score = min(best_score, score)
                if log_fh:
                    log_fh.write(json.dumps(val, sort_keys=True) + "\n")
                    log_fh.flush()
                log.info("step %d rc=%.4f val_stft_d=%.4f", step, report.rc, score)
    finally:
        if log_fh:
            log_fh.close()

    if out_dir is not None:
        save_checkpoint(disc, out_dir / "discriminator.ckpt", dict(meta_base, step=train_cfg.steps))
        best = min(result.validations, key=lambda v: v["val_stft_d"])
        (out_dir / "best.json").write_text(json.dumps(
            {"checkpoint": result.best.name, "step": best["step"], "val_stft_d": best["val_stft_d"]},
            sort_keys=True) + "\n")
    return result
