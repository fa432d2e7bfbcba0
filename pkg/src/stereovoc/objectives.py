"""Least-squares adversarial, feature-matching and multi-resolution mel
reconstruction losses, and the combined generator/discriminator objectives."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

import torch

from . import autodiff as ad
from .errors import ContractError, ShapeError
from .spectral import mel_filterbank


@dataclass(frozen=True)
class LossWeights:
    lambda_fm: float = 1.0
    lambda_rc: float = 360.0

    def __post_init__(self):
        if self.lambda_fm < 0 or self.lambda_rc < 0:
            raise ContractError(f"loss weights must be >= 0, got {self}")


@dataclass
class LossReport:
    adv_g: float = 0.0
    fm: float = 0.0
    rc: float = 0.0
    total_g: float = 0.0
    adv_d: float = math.nan
    adv_g_k: list = field(default_factory=list)
    fm_k: list = field(default_factory=list)
    adv_d_k: list = field(default_factory=list)
    total: torch.Tensor | None = field(default=None, repr=False)

    def record(self, **extra) -> dict:
        rec = dict(extra)
        rec.update(adv_g=self.adv_g, fm=self.fm, rc=self.rc, total_g=self.total_g, adv_d=self.adv_d,
                   adv_g_k=self.adv_g_k, fm_k=self.fm_k, adv_d_k=self.adv_d_k)
        return rec

    def to_json(self, **extra) -> str:
        return json.dumps(self.record(**extra), sort_keys=True)


def _scores(item):
    # accept raw score tensors or (score, feats) pairs straight from the ensemble
    return item[0] if isinstance(item, tuple) else item


def adv_loss_g_terms(fake_scores) -> list[torch.Tensor]:
    fake_scores = list(fake_scores)
    if not fake_scores:
        raise ContractError("adversarial loss needs at least one sub-discriminator score")
    return [torch.mean((_scores(s) - 1) ** 2) for s in fake_scores]


def adv_loss_g(fake_scores) -> torch.Tensor:
    return torch.stack(adv_loss_g_terms(fake_scores)).sum()


def adv_loss_d_terms(real_scores, fake_scores) -> list[torch.Tensor]:
    real_scores, fake_scores = list(real_scores), list(fake_scores)
    if len(real_scores) != len(fake_scores):
        raise ContractError(f"got {len(real_scores)} real and {len(fake_scores)} fake score maps")
    if not real_scores:
        raise ContractError("adversarial loss needs at least one sub-discriminator score")
    return [torch.mean((_scores(r) - 1) ** 2) + torch.mean(_scores(f) ** 2)
            for r, f in zip(real_scores, fake_scores)]


def adv_loss_d(real_scores, fake_scores) -> torch.Tensor:
    return torch.stack(adv_loss_d_terms(real_scores, fake_scores)).sum()


def feature_matching_terms(real_feats, fake_feats) -> list[torch.Tensor]:
    """Per sub-discriminator: sum over layers of mean |real - fake|.

    Real features are detached.
    """
    real_feats, fake_feats = list(real_feats), list(fake_feats)
    if len(real_feats) != len(fake_feats) or not real_feats:
        raise ContractError(f"feature lists differ: {len(real_feats)} vs {len(fake_feats)} sub-discriminators")
    terms = []
    for k, (rs, fs) in enumerate(zip(real_feats, fake_feats)):
        if len(rs) != len(fs):
            raise ContractError(f"sub-discriminator {k}: {len(rs)} real vs {len(fs)} fake layers")
        total = 0
        for r, f in zip(rs, fs):
            if r.shape != f.shape:
                raise ContractError(f"sub-discriminator {k}: feature shapes {tuple(r.shape)} vs {tuple(f.shape)}")
            total = total + torch.mean(torch.abs(r.detach() - f))
        terms.append(total)
    return terms


def feature_matching_loss(real_feats, fake_feats) -> torch.Tensor:
    """Mean over sub-discriminators of the per-layer L1 sums."""
    return torch.stack(feature_matching_terms(real_feats, fake_feats)).mean()


@lru_cache(maxsize=64)
def _filterbank(stft_cfg, mel_cfg, dtype) -> torch.Tensor:
    return torch.tensor(np.array(mel_filterbank(stft_cfg, mel_cfg)), dtype=dtype)


def log_mel_tensor(x: torch.Tensor, stft_cfg, mel_cfg) -> torch.Tensor:
    """Differentiable ``(..., n_mels, frames)`` log-mel."""
    real, imag = ad.framed_dft(x, stft_cfg)
    mag = ad.magnitude(real, imag)
    fb = _filterbank(stft_cfg, mel_cfg, x.dtype)
    return torch.log(torch.clamp_min(fb @ mag, mel_cfg.log_floor))


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor, configs) -> torch.Tensor:
    """Sum over resolutions of the mean absolute log-mel difference."""
    configs = list(configs)
    if x.shape != x_hat.shape:
        raise ContractError(f"reconstruction loss needs equal shapes, got {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    if not configs:
        raise ContractError("reconstruction loss needs at least one resolution")
    total = 0
    for s, m in configs:
        total = total + torch.mean(torch.abs(log_mel_tensor(x, s, m) - log_mel_tensor(x_hat, s, m)))
    return total


def generate(generator, x_input, length: int, residual=None) -> torch.Tensor:
    """Generator output trimmed/zero-padded to ``length``, plus optional residual."""
    y = generator(x_input)
    if y.shape[-1] >= length:
        y = y[..., :length]
    else:
        y = torch.nn.functional.pad(y, (0, length - y.shape[-1]))
    if residual is not None:
        if residual.shape != y.shape:
            raise ShapeError(f"residual shape {tuple(residual.shape)} vs output {tuple(y.shape)}")
        y = y + residual
    return y


def generator_objective(generator, discriminator, x_real, x_input, weights: LossWeights = LossWeights(),
                        rc_configs=None, residual=None, x_fake=None) -> LossReport:
    """Total generator loss with its breakdown.

    ``total = sum_k(adv_k + lambda_fm * fm_k) + lambda_rc * rc``. Pass
    ``x_fake`` to reuse an already generated waveform.
    """
    if rc_configs is None:
        raise ContractError("rc_configs (multi-resolution mel configs) are required")
    if x_fake is None:
        x_fake = generate(generator, x_input, x_real.shape[-1], residual)
    fake_out = discriminator(x_fake)
    with torch.no_grad():
        real_out = discriminator(x_real)
    adv_terms = adv_loss_g_terms(fake_out)
    fm_terms = feature_matching_terms([f for _, f in real_out], [f for _, f in fake_out])
    rc = reconstruction_loss(x_real, x_fake, rc_configs)
    adv = torch.stack(adv_terms).sum()
    fm_sum = torch.stack(fm_terms).sum()
    total = adv + weights.lambda_fm * fm_sum + weights.lambda_rc * rc
    return LossReport(adv_g=adv.item(), fm=fm_sum.item(), rc=rc.item(), total_g=total.item(),
                      adv_g_k=[t.item() for t in adv_terms], fm_k=[t.item() for t in fm_terms],
                      total=total)


def discriminator_objective(discriminator, x_real, x_fake) -> tuple[torch.Tensor, list[float]]:
    """``L_D`` on detached fakes; returns the loss tensor and per-k values."""
    real_out = discriminator(x_real)
    fake_out = discriminator(x_fake.detach())
    terms = adv_loss_d_terms(real_out, fake_out)
    return torch.stack(terms).sum(), [t.item() for t in terms]
