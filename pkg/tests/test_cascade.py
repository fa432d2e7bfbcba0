import numpy as np
import pytest
import torch

from stereovoc import cascade, dsp
from stereovoc.audio import AudioBuffer
from stereovoc.errors import StageError
from stereovoc.nets import build_generator, save_checkpoint
from stereovoc.spectral import log_mel
from stereovoc.stages import BWE, M2S, VOCODER

GAMMAS = (-18.0, -12.0, -6.0, 0.0)


def _model(stage, seed=0):
    return cascade.StageModel(build_generator(stage.generator_config(base_channels=8), seed=seed), stage)


@pytest.fixture(scope="module")
def models():
    return cascade.CascadeModels(_model(VOCODER, 1), _model(BWE, 2), _model(M2S, 3))


def _mel(frames, seed=0):
    return np.random.default_rng(seed).normal(-4.0, 1.5, (128, frames))


def _mono(n, rate, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    return AudioBuffer.mono(0.4 * np.sin(2 * np.pi * 440 * t) + 0.05 * rng.standard_normal(n), rate)


def _float32_exact(buf):
    return buf.astype(np.float32).astype(np.float64)


class TestVocode:
    def test_length_and_range(self, models):
        out = cascade.vocode(models, _mel(64))
        assert len(out) == 16384 and out.sample_rate == 22050 and out.channels == 1
        assert np.all(np.abs(out.data) < 1.0)

    @pytest.mark.parametrize("frames", [1, 3, 17, 64])
    def test_length_contract(self, models, frames):
        assert len(cascade.vocode(models, _mel(frames))) == frames * 256

    def test_deterministic(self, models):
        a, b = cascade.vocode(models, _mel(8)), cascade.vocode(models, _mel(8))
        np.testing.assert_array_equal(a.data, b.data)

    def test_zero_post_conv_is_silent(self):
        m = _model(VOCODER)
        with torch.no_grad():
            m.generator.post.weight.zero_()
            m.generator.post.bias.zero_()
        assert np.all(cascade.vocode(m, _mel(4)).data == 0.0)

    def test_melspec_config_check(self, models):
        spec = log_mel(_mono(4096, 22050), BWE.stft, BWE.mel)
        with pytest.raises(StageError, match="frontend"):
            cascade.vocode(models, spec)
        ok = log_mel(_mono(4096, 22050), VOCODER.stft, VOCODER.mel)
        assert len(cascade.vocode(models, ok)) == ok.values.shape[1] * 256

    def test_wrong_band_count(self, models):
        with pytest.raises(StageError, match="128"):
            cascade.vocode(models, np.zeros((80, 4)))


class TestBwe:
    def test_zero_generator_is_residual(self):
        low = _mono(8192, 22050)
        out = cascade.bwe(cascade.zero_stage(BWE), low)
        assert out.sample_rate == 44100
        np.testing.assert_array_equal(out.data, dsp.sinc_resample(low, "up2").data)

    @pytest.mark.parametrize("n", [128, 1000, 8192])
    def test_length_contract(self, models, n):
        assert len(cascade.bwe(models, _mono(n, 22050))) == 2 * n

    def test_output_is_generator_plus_residual(self, models):
        low = _mono(4096, 22050)
        out = cascade.bwe(models, low)
        residual = dsp.sinc_resample(low, "up2").data
        from stereovoc.trainer import stage_mel

        gen = models.bwe.run(stage_mel(BWE, low), 8192)
        np.testing.assert_array_equal(out.data, gen.astype(np.float64) + residual)

    def test_rate_mismatch(self, models):
        with pytest.raises(StageError, match="22050"):
            cascade.bwe(models, _mono(1000, 44100))


class TestM2s:
    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_downmix_recovers_mono(self, models, gamma):
        x = _float32_exact(_mono(10000, 44100, seed=4))
        stereo = cascade.m2s(models, x, gamma)
        assert stereo.channels == 2 and len(stereo) == len(x)
        np.testing.assert_array_equal(dsp.downmix(stereo).data, x.data)

    @pytest.mark.parametrize("gamma", GAMMAS)
    def test_downmix_single_precision(self, models, gamma):
        x = _mono(10000, 44100, seed=5).astype(np.float32)
        stereo = cascade.m2s(models, x, gamma, dtype=np.float32)
        assert stereo.dtype == np.float32
        assert np.max(np.abs(dsp.downmix(stereo).data - x.data)) <= 1e-6

    def test_width_calibrated_and_increasing(self, models):
        x = _mono(10000, 44100, seed=6)
        ratios = []
        for gamma in GAMMAS:
            mid, side = dsp.mid_side_encode(cascade.m2s(models, x, gamma))
            ratio = dsp.rms(side.data) / dsp.rms(mid.data)
            assert abs(ratio / 10 ** (gamma / 20) - 1) <= 1e-6
            ratios.append(ratio)
        assert all(a < b for a, b in zip(ratios, ratios[1:]))

    def test_very_negative_gamma_is_near_dual_mono(self, models):
        x = _mono(10000, 44100)
        out = cascade.m2s(models, x, -120.0)
        side_rms = dsp.rms((out.left - out.right) / 2)
        assert abs(side_rms / dsp.rms(x.data) - 1e-6) <= 1e-12

    def test_zero_generator_flags_and_is_dual_mono(self):
        x = _mono(4096, 44100)
        with pytest.warns(dsp.NoSpatialContentWarning):
            out = cascade.m2s(cascade.zero_stage(M2S), x, 0.0)
        np.testing.assert_array_equal(out.left, x.data)
        np.testing.assert_array_equal(out.right, x.data)

    def test_errors(self, models):
        with pytest.raises(StageError, match="mono"):
            cascade.m2s(models, AudioBuffer.stereo(np.zeros(100), np.zeros(100), 44100))
        with pytest.raises(StageError, match="44100"):
            cascade.m2s(models, _mono(1000, 22050))


class TestFullCascade:
    def test_length(self, models):
        out = cascade.full_cascade(models, _mel(64), -6.0)
        assert out.channels == 2 and len(out) == 32768 and out.sample_rate == 44100

    def test_equals_manual_chain(self, models):
        mel = _mel(16, seed=3)
        out = cascade.full_cascade(models, mel, -12.0)
        manual = cascade.m2s(models, cascade.bwe(models, cascade.vocode(models, mel)), -12.0)
        np.testing.assert_array_equal(out.samples, manual.samples)

    def test_all_zero_models_are_silent(self):
        zeros = cascade.CascadeModels(*(cascade.zero_stage(s, base_channels=8) for s in (VOCODER, BWE, M2S)))
        with pytest.warns(dsp.NoSpatialContentWarning):
            out = cascade.full_cascade(zeros, _mel(8), 0.0)
        assert len(out) == 4096 and np.all(out.samples == 0.0)

    def test_slot_and_rate_validation(self):
        with pytest.raises(StageError, match="bwe slot"):
            cascade.CascadeModels(_model(VOCODER), _model(M2S), _model(M2S))

    def test_load_from_checkpoints(self, models, tmp_path):
        paths = []
        for name in ("vocoder", "bwe", "m2s"):
            p = tmp_path / f"{name}.ckpt"
            save_checkpoint(getattr(models, name).generator, p, {"stage": name})
            paths.append(p)
        loaded = cascade.load_cascade(*paths)
        mel = _mel(8)
        np.testing.assert_array_equal(cascade.full_cascade(loaded, mel).samples,
                                      cascade.full_cascade(models, mel).samples)
        with pytest.raises(StageError, match="expected bwe"):
            cascade.load_stage(paths[0], "bwe")
