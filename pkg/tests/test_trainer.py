import json
import math

import numpy as np
import pytest

from stereovoc import dsp, trainer
from stereovoc.audio import AudioBuffer
from stereovoc.errors import ConfigError, DataError, TrainingDivergedError
from stereovoc.nets import DiscriminatorConfig, load_checkpoint
from stereovoc.stages import BWE, M2S, VOCODER
from stereovoc.spectral import log_mel

TINY_D = DiscriminatorConfig(periods=(2, 3), mpd_channels=(4, 8), mmsd_windows=(256,), mmsd_channels=4)
TINY_G = {"base_channels": 8}
CROP = 2048


def _clip(n, seed=0, same=False):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / 44100
    left = 0.3 * np.sin(2 * np.pi * 345 * t) + 0.02 * rng.standard_normal(n)
    right = left if same else 0.2 * np.sin(2 * np.pi * 517 * t + 0.4) + 0.02 * rng.standard_normal(n)
    return AudioBuffer.stereo(left, right, 44100)


def _run(stage, out_dir=None, steps=2, seed=0, **kw):
    spec = {"vocoder": VOCODER, "bwe": BWE, "m2s": M2S}[stage]
    cfg = trainer.TrainConfig(steps=steps, batch_size=2, seed=seed, validation_every=kw.pop("every", 1),
                              **kw.pop("train", {}))
    clips = [_clip(6000, 1), _clip(5000, 2)]
    return trainer.train(stage, clips, spec.generator_config(**TINY_G), cfg, out_dir, TINY_D,
                         crop_length=CROP, **kw)


class TestMakePair:
    def test_vocoder_counts(self):
        pair = trainer.make_pair(trainer.StagePrep("vocoder"), _clip(40000), 100)
        assert len(pair.target) == 16384 and pair.target.sample_rate == 22050
        assert pair.mel.shape == (128, 64)

    def test_vocoder_matches_whole_clip_downsampling_in_the_interior(self):
        clip = _clip(40000)
        pair = trainer.make_pair(trainer.StagePrep("vocoder", 4096), clip, 10000)
        full = dsp.sinc_resample(dsp.downmix(clip), "down2").data[5000:5000 + 4096]
        np.testing.assert_allclose(pair.target.data, full, atol=1e-12)

    def test_bwe_pair_is_the_same_crop_at_two_rates(self):
        clip = _clip(20000)
        pair = trainer.make_pair(trainer.StagePrep("bwe"), clip, 300)
        assert len(pair.target) == 16384 and pair.target.sample_rate == 44100
        assert len(pair.source) == 8192 and pair.source.sample_rate == 22050
        crop = dsp.downmix(AudioBuffer(clip.samples[:, 300:300 + 16384], 44100))
        np.testing.assert_array_equal(pair.target.data, crop.data)
        np.testing.assert_array_equal(pair.source.data, dsp.downsample2(crop.data))
        np.testing.assert_array_equal(pair.residual, dsp.upsample2(pair.source.data))
        assert pair.mel.shape == (128, 64)

    def test_m2s_dual_mono_side_is_zero(self):
        pair = trainer.make_pair(trainer.StagePrep("m2s"), _clip(20000, same=True))
        assert np.all(pair.target.data == 0.0)
        assert pair.mel.shape == (128, 64)

    def test_m2s_mel_is_mid(self):
        clip = _clip(20000)
        pair = trainer.make_pair(trainer.StagePrep("m2s", 4096), clip)
        mid = (clip.left[:4096] + clip.right[:4096]) / 2
        np.testing.assert_array_equal(pair.mel, log_mel(mid, M2S.stft, M2S.mel).values[:, :16])
        np.testing.assert_array_equal(pair.target.data, (clip.left[:4096] - clip.right[:4096]) / 2)

    def test_mono_clip_is_treated_as_dual_mono(self):
        x = _clip(20000).left
        a = trainer.make_pair(trainer.StagePrep("bwe"), AudioBuffer.mono(x, 44100))
        b = trainer.make_pair(trainer.StagePrep("bwe"), AudioBuffer.stereo(x, x, 44100))
        np.testing.assert_array_equal(a.target.data, b.target.data)

    def test_errors(self):
        with pytest.raises(DataError, match="shorter"):
            trainer.make_pair(trainer.StagePrep("vocoder"), _clip(20000))
        with pytest.raises(DataError, match="offset"):
            trainer.make_pair(trainer.StagePrep("m2s"), _clip(20000), 5000)
        with pytest.raises(DataError, match="44100"):
            trainer.make_pair(trainer.StagePrep("m2s"), AudioBuffer.mono(np.zeros(20000), 22050))
        with pytest.raises(ConfigError):
            trainer.StagePrep("reverb")
        with pytest.raises(ConfigError):
            trainer.TrainConfig(steps=0)


class TestTrain:
    def test_one_step_run(self, tmp_path):
        res = _run("vocoder", tmp_path, steps=1)
        ckpts = sorted(tmp_path.glob("g_*.ckpt"))
        assert [p.name for p in ckpts] == ["g_0000001.ckpt"] == [p.name for p in res.checkpoints]
        lines = [json.loads(l) for l in (tmp_path / "train.log").read_text().splitlines()]
        step = [l for l in lines if l.get("event") != "validation"]
        assert len(step) == 1
        for key in ("adv_g", "fm", "rc", "total_g", "adv_d", "adv_g_k", "fm_k", "adv_d_k", "step"):
            assert key in step[0]
        assert len(step[0]["adv_g_k"]) == len(TINY_D.periods) + len(TINY_D.mmsd_windows)
        assert json.loads((tmp_path / "best.json").read_text())["checkpoint"] == "g_0000001.ckpt"
        net, meta = load_checkpoint(ckpts[0])
        assert meta["stage"] == "vocoder" and meta["step"] == 1

    @pytest.mark.parametrize("stage", ["vocoder", "bwe", "m2s"])
    def test_same_seed_is_bit_identical(self, stage, tmp_path):
        a = _run(stage, tmp_path / "a", steps=2, seed=3)
        b = _run(stage, tmp_path / "b", steps=2, seed=3)
        assert a.history == b.history
        for name in ("train.log", "g_0000001.ckpt", "g_0000002.ckpt", "best.json", "discriminator.ckpt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_different_seed_differs(self):
        assert _run("m2s", steps=1, seed=1).history != _run("m2s", steps=1, seed=2).history

    def test_updates_are_isolated(self):
        res = _run("bwe", steps=2, check_isolation=True)
        assert len(res.history) == 2

    def test_best_marker_is_earliest_minimum(self, tmp_path, monkeypatch):
        scores = iter([3.0, 1.0, 2.0, 1.0])
        monkeypatch.setattr(trainer, "stft_validation", lambda g, p: next(scores))
        res = _run("m2s", tmp_path, steps=4)
        best = json.loads((tmp_path / "best.json").read_text())
        assert best == {"checkpoint": "g_0000002.ckpt", "step": 2, "val_stft_d": 1.0}
        assert res.best.name == "g_0000002.ckpt"

    def test_validation_schedule(self, tmp_path):
        res = _run("m2s", tmp_path, steps=5, every=2)
        assert [v["step"] for v in res.validations] == [2, 4, 5]
        assert all(math.isfinite(v["val_stft_d"]) and v["val_stft_d"] > 0 for v in res.validations)

    def test_divergence_guard(self, tmp_path):
        with pytest.raises(TrainingDivergedError, match="step 1"):
            _run("m2s", tmp_path, steps=3, train={"lambda_rc": math.inf})

    def test_empty_or_short_dataset(self):
        with pytest.raises(DataError, match="empty"):
            trainer.train("m2s", [], crop_length=CROP)
        with pytest.raises(DataError, match="clip 0"):
            trainer.train("m2s", [_clip(100)], crop_length=CROP)
