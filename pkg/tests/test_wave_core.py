import struct

import numpy as np
import pytest

from stereovoc import dsp
from stereovoc.audio import AudioBuffer, read_wav, write_wav
from stereovoc.errors import (ChannelCountError, DimensionError, FormatError, ParameterError,
                              SilentInputError)


def _wav_bytes(fmt_tag, channels, rate, bits, payload, extra_fmt=b""):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", fmt_tag, channels, rate, rate * block, block, bits) + extra_fmt
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestAudioBuffer:
    def test_invariants(self):
        with pytest.raises(ChannelCountError):
            AudioBuffer(np.zeros((3, 4)), 8000)
        with pytest.raises(DimensionError):
            AudioBuffer(np.zeros(4), 0)
        with pytest.raises(DimensionError):
            AudioBuffer.stereo(np.zeros(3), np.zeros(4), 8000)

    def test_immutable(self):
        x = AudioBuffer.mono(np.zeros(4), 8000)
        with pytest.raises(ValueError):
            x.data[0] = 1.0


class TestWav:
    def test_pcm16_scaling(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(1, 1, 16000, 16, struct.pack("<h", 16384)))
        x = read_wav(p)
        assert x.sample_rate == 16000 and x.channels == 1
        assert x.data.tolist() == [0.5]

    def test_pcm24_and_stereo_interleave(self, tmp_path):
        p = tmp_path / "b.wav"
        words = [2 ** 22, -(2 ** 22), 1, -1]
        payload = b"".join(w.to_bytes(3, "little", signed=True) for w in words)
        p.write_bytes(_wav_bytes(1, 2, 44100, 24, payload))
        x = read_wav(p)
        assert x.left.tolist() == [0.5, 2 ** -23]
        assert x.right.tolist() == [-0.5, -(2 ** -23)]

    def test_empty_data(self, tmp_path):
        p = tmp_path / "e.wav"
        p.write_bytes(_wav_bytes(1, 1, 8000, 16, b""))
        assert len(read_wav(p)) == 0

    @pytest.mark.parametrize("tag,channels,bits,field", [(2, 1, 16, "format"), (1, 3, 16, "channels"),
                                                         (1, 1, 12, "bits")])
    def test_bad_header_names_field(self, tmp_path, tag, channels, bits, field):
        p = tmp_path / "bad.wav"
        p.write_bytes(_wav_bytes(tag, channels, 8000, bits, b"\0" * 12))
        with pytest.raises(FormatError, match=field):
            read_wav(p)

    def test_not_riff(self, tmp_path):
        p = tmp_path / "x.wav"
        p.write_bytes(b"garbage" * 4)
        with pytest.raises(FormatError):
            read_wav(p)

    def test_pcm16_write_words(self, tmp_path):
        p = tmp_path / "w.wav"
        write_wav(AudioBuffer.mono(np.array([0.0, 2.0, -2.0, 0.5]), 8000), p, "pcm16")
        words = np.frombuffer(p.read_bytes()[-8:], dtype="<i2")
        assert words.tolist() == [0, 32767, -32768, 16384]

    def test_pcm16_round_trip_within_one_step(self, tmp_path, rng):
        x = AudioBuffer.stereo(rng.uniform(-1, 1, 500), rng.uniform(-1, 1, 500), 22050)
        write_wav(x, tmp_path / "r.wav", "pcm16")
        y = read_wav(tmp_path / "r.wav")
        assert np.max(np.abs(y.samples - x.samples)) <= 2 ** -15

    @pytest.mark.parametrize("enc,dtype", [("float32", np.float32), ("float64", np.float64)])
    def test_float_round_trip_bit_exact(self, tmp_path, rng, enc, dtype):
        x = AudioBuffer.stereo(*rng.standard_normal((2, 777)).astype(dtype), 44100)
        write_wav(x, tmp_path / "f.wav", enc)
        y = read_wav(tmp_path / "f.wav")
        assert y.sample_rate == 44100
        assert np.array_equal(y.samples, x.samples.astype(np.float64))


class TestMidSide:
    def test_examples(self):
        m, s = dsp.mid_side_encode(AudioBuffer.stereo([1.0, 1.0, 0.5], [1.0, -1.0, 0.25], 8000))
        assert m.data.tolist() == [1.0, 0.0, 0.375]
        assert s.data.tolist() == [0.0, 1.0, 0.125]
        m, s = dsp.mid_side_encode(AudioBuffer.stereo([0.5], [0.1], 8000))
        assert m.data[0] == pytest.approx(0.3, abs=1e-9) and s.data[0] == pytest.approx(0.2, abs=1e-9)
        out = dsp.mid_side_decode(AudioBuffer.mono([0.3], 8000), AudioBuffer.mono([0.2], 8000))
        assert out.left[0] == pytest.approx(0.5, abs=1e-9) and out.right[0] == pytest.approx(0.1, abs=1e-9)

    def test_round_trip_random(self, rng):
        for dtype, tol in ((np.float64, 0.0), (np.float32, 1e-7)):
            x = AudioBuffer(rng.uniform(-1, 1, (2, 4096)).astype(dtype), 44100)
            y = dsp.mid_side_decode(*dsp.mid_side_encode(x))
            assert np.max(np.abs(y.samples - x.samples)) <= tol

    def test_errors(self):
        mono = AudioBuffer.mono(np.zeros(4), 8000)
        with pytest.raises(ChannelCountError):
            dsp.mid_side_encode(mono)
        with pytest.raises(ChannelCountError):
            dsp.downmix(mono)
        with pytest.raises(DimensionError):
            dsp.mid_side_decode(mono, AudioBuffer.mono(np.zeros(5), 8000))
        with pytest.raises(DimensionError):
            dsp.mid_side_decode(mono, AudioBuffer.mono(np.zeros(4), 16000))

    def test_downmix(self, rng):
        x = rng.standard_normal(100)
        assert np.array_equal(dsp.downmix(AudioBuffer.stereo(x, x, 8000)).data, x)
        st = AudioBuffer(rng.standard_normal((2, 100)), 8000)
        assert np.array_equal(dsp.downmix(st).data, st.samples.mean(axis=0))

    def test_decode_then_downmix_recovers_mid(self, rng):
        m = rng.uniform(-1, 1, 2048)
        s = rng.uniform(-1, 1, 2048)
        out = dsp.mid_side_decode(AudioBuffer.mono(m, 8000), AudioBuffer.mono(s, 8000))
        assert np.array_equal(dsp.downmix(out).data, m)


class TestWidth:
    def test_alpha(self):
        assert dsp.WidthControl(0.0).alpha == 1.0
        assert dsp.WidthControl(20.0).alpha == pytest.approx(10.0)
        assert dsp.WidthControl(-300.0).alpha > 0

    def test_unit_gain_unchanged(self, rng):
        m = AudioBuffer.mono(rng.standard_normal(1000), 8000)
        s = AudioBuffer.mono(rng.standard_normal(1000), 8000)
        s = AudioBuffer.mono(s.data * dsp.rms(m) / dsp.rms(s), 8000)
        out = dsp.apply_width(m, s, dsp.WidthControl(0.0))
        np.testing.assert_allclose(out.data, s.data, rtol=1e-12)

    def test_calibration(self, rng):
        m = AudioBuffer.mono(rng.standard_normal(5000), 8000)
        s = AudioBuffer.mono(0.01 * rng.standard_normal(5000), 8000)
        assert dsp.rms(dsp.apply_width(m, s, 20.0)) / dsp.rms(m) == pytest.approx(10.0, rel=1e-9)
        ratio = dsp.rms(dsp.apply_width(m, s, -6.0)) / dsp.rms(m)
        assert abs(ratio / 10 ** (-6 / 20) - 1) <= 1e-6

    def test_silent_side(self):
        m = AudioBuffer.mono(np.ones(10), 8000)
        with pytest.warns(dsp.NoSpatialContentWarning):
            out = dsp.apply_width(m, AudioBuffer.mono(np.zeros(10), 8000), 0.0)
        assert not np.any(out.data)


class TestResample:
    def test_taps_validation(self):
        x = AudioBuffer.mono(np.zeros(64), 22050)
        with pytest.raises(ParameterError):
            dsp.sinc_resample(x, "up2", taps=254)
        with pytest.raises(ParameterError):
            dsp.sinc_resample(x, "up2", taps=29)
        with pytest.raises(ParameterError):
            dsp.sinc_resample(x, "up3")

    def test_lengths_and_rates(self):
        x = AudioBuffer.mono(np.zeros(1001), 22050)
        up = dsp.sinc_resample(x, "up2")
        assert len(up) == 2002 and up.sample_rate == 44100
        down = dsp.sinc_resample(AudioBuffer.mono(np.zeros(1000), 44100), "down2")
        assert len(down) == 500 and down.sample_rate == 22050

    def test_zero_and_dc(self):
        assert not np.any(dsp.sinc_resample(AudioBuffer.mono(np.zeros(500), 22050), "up2").data)
        up = dsp.sinc_resample(AudioBuffer.mono(np.full(2000, 0.5), 22050), "up2").data
        assert np.max(np.abs(up[300:-300] - 0.5)) <= 1e-3

    def test_sine_vs_fft_oracle(self):
        n = 4410  # 1 kHz completes 200 periods: periodic, so the FFT oracle is exact
        t = np.arange(n) / 22050
        x = np.sin(2 * np.pi * 1000 * t)
        spec = np.fft.rfft(x)
        padded = np.zeros(n + 1, dtype=complex)
        padded[:len(spec)] = spec
        oracle = np.fft.irfft(padded, 2 * n) * 2
        up = dsp.sinc_resample(AudioBuffer.mono(x, 22050), "up2").data
        assert np.max(np.abs(up - oracle)[300:-300]) <= 1e-3

    def test_composition(self, rng):
        n = 8192
        spec = np.fft.rfft(rng.standard_normal(n))
        spec[int(0.4 * len(spec)):] = 0  # nothing above 0.4 of Nyquist
        x = np.fft.irfft(spec, n)
        x /= np.max(np.abs(x))
        up = dsp.sinc_resample(AudioBuffer.mono(x, 22050), "up2")
        back = dsp.sinc_resample(up, "down2").data
        assert np.max(np.abs(back - x)[300:-300]) <= 1e-3

    def test_dtype_follows_input(self):
        x = AudioBuffer.mono(np.zeros(64, dtype=np.float32), 22050)
        assert dsp.sinc_resample(x, "up2").dtype == np.float32


class TestLoudness:
    def test_full_scale_sine_gain(self):
        t = np.arange(44100) / 44100
        x = AudioBuffer.mono(np.sin(2 * np.pi * 100 * t), 44100)
        assert dsp.loudness_gain(x, -23.0) == pytest.approx(10 ** (-23 / 20) * np.sqrt(2), rel=1e-9)
        y = dsp.loudness_normalize(x, -23.0)
        assert 20 * np.log10(dsp.rms(y)) == pytest.approx(-23.0, abs=1e-6)

    def test_idempotent(self, rng):
        x = AudioBuffer(rng.standard_normal((2, 1000)), 8000)
        once = dsp.loudness_normalize(x, -23)
        assert dsp.loudness_gain(once, -23) == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(dsp.loudness_normalize(once, -23).samples, once.samples, atol=1e-6)

    def test_silent(self):
        with pytest.raises(SilentInputError):
            dsp.loudness_normalize(AudioBuffer.mono(np.zeros(10), 8000), -23)
