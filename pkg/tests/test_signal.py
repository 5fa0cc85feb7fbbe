import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import sosfiltfilt, butter

from drclab.signal import (
    SignalBuffer,
    SpeechLikeConfig,
    WavFormatError,
    generate_speechlike,
    generate_tone,
    generate_white_noise,
    mix,
    mix_all,
    read_wav,
    write_signal_csv,
    write_wav,
)

FS = 16000


def smoothed_power_db(x, fs=FS, tau_s=0.05):
    """One-pole smoothing of x**2 with a 50 ms time constant, in dB."""
    from scipy.signal import lfilter

    a = np.exp(-1.0 / (tau_s * fs))
    p = lfilter([1 - a], [1, -a], x**2)
    return 10 * np.log10(np.maximum(p, 1e-12))


class TestBuffer:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            SignalBuffer(np.array([0.0, np.nan]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            SignalBuffer(np.array([]))

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            SignalBuffer(np.zeros(4), 0)

    def test_level(self):
        b = SignalBuffer(np.full(100, 0.1))
        assert b.level_db() == pytest.approx(-20.0)
        assert b.with_level(-6.0).level_db() == pytest.approx(-6.0)


class TestWhiteNoise:
    def test_level_within_tolerance(self):
        x = generate_white_noise(16000, 0.0, seed=7)
        assert abs(10 * np.log10(np.mean(x.samples**2))) <= 0.2

    def test_length_one(self):
        x = generate_white_noise(1, 0.0, seed=3)
        assert len(x) == 1 and np.isfinite(x.samples).all()

    def test_deterministic(self):
        a = generate_white_noise(5000, -10.0, seed=42)
        b = generate_white_noise(5000, -10.0, seed=42)
        assert np.array_equal(a.samples, b.samples)

    def test_seed_changes_output(self):
        a = generate_white_noise(100, 0.0, seed=1)
        b = generate_white_noise(100, 0.0, seed=2)
        assert not np.array_equal(a.samples, b.samples)

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            generate_white_noise(0)

    def test_seed_range(self):
        generate_white_noise(10, seed=2**64 - 1)
        with pytest.raises(ValueError):
            generate_white_noise(10, seed=2**64)
        with pytest.raises(ValueError):
            generate_white_noise(10, seed=-1)

    def test_roughly_gaussian(self):
        x = generate_white_noise(200000, 0.0, seed=5).samples
        from scipy.stats import kurtosis, skew

        assert abs(skew(x)) < 0.05
        assert abs(kurtosis(x)) < 0.1

    @given(st.integers(16000, 40000), st.floats(-60, 0), st.integers(0, 2**64 - 1))
    def test_level_calibration(self, n, level, seed):
        x = generate_white_noise(n, level, seed)
        assert abs(x.level_db() - level) <= 0.2


class TestSpeechLike:
    def test_dynamic_range(self):
        x = generate_speechlike(160000, 0.0, seed=3, mod_rate_hz=4.0)
        p = smoothed_power_db(x.samples)
        lo, hi = np.percentile(p, [5, 95])
        assert hi - lo >= 20.0

    def test_level(self):
        x = generate_speechlike(32000, -23.0, seed=9)
        assert abs(x.level_db() + 23.0) <= 0.2

    def test_independent_seeds(self):
        a = smoothed_power_db(generate_speechlike(160000, 0.0, seed=1).samples)
        b = smoothed_power_db(generate_speechlike(160000, 0.0, seed=2).samples)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_deterministic(self):
        assert generate_speechlike(8000, 0.0, 5) == generate_speechlike(8000, 0.0, 5)

    @pytest.mark.parametrize("rate", [0.0, -1.0, 8000.0, 9000.0])
    def test_invalid_mod_rate(self, rate):
        with pytest.raises(ValueError):
            generate_speechlike(1000, 0.0, 1, mod_rate_hz=rate)

    def test_constant_modulator_is_white(self):
        cfg = SpeechLikeConfig(mod_depth_db=0.0, pause_fraction=0.0, tilt_db=0.0)
        assert cfg.is_constant
        x = generate_speechlike(160000, 0.0, 4, config=cfg).samples
        p = smoothed_power_db(x)[4000:]
        # a white-noise envelope smoothed over 50 ms spreads only a few dB
        lo, hi = np.percentile(p, [5, 95])
        assert hi - lo < 3.0
        spec = np.abs(np.fft.rfft(x)) ** 2
        halves = [spec[1 : spec.size // 2].mean(), spec[spec.size // 2 :].mean()]
        assert abs(10 * np.log10(halves[0] / halves[1])) < 0.5

    @pytest.mark.parametrize("level", [-40.0, -10.0, 0.0])
    def test_level_calibration(self, level):
        x = generate_speechlike(16000, level, seed=11)
        assert abs(x.level_db() - level) <= 0.2


class TestMix:
    def test_zero_identity(self):
        x = generate_white_noise(100, 0, 1)
        assert mix(x, SignalBuffer.zeros(100)) == x

    def test_inverse(self):
        x = generate_white_noise(100, 0, 1)
        assert np.all(mix(x, x.scaled(-1.0)).samples == 0)

    def test_uncorrelated_power_adds(self):
        a = generate_white_noise(160000, 0, 1)
        b = generate_white_noise(160000, 0, 2)
        assert abs(mix(a, b).level_db() - 10 * np.log10(2)) <= 0.3

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mix(SignalBuffer(np.zeros(10)), SignalBuffer(np.zeros(11)))
        with pytest.raises(ValueError):
            mix(SignalBuffer(np.zeros(10), 16000), SignalBuffer(np.zeros(10), 8000))

    @given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
    def test_commutative_associative(self, s1, s2, s3):
        a, b, c = (generate_white_noise(256, 0, s) for s in (s1, s2, s3))
        assert mix(a, b) == mix(b, a)
        lhs = mix(mix(a, b), c).samples
        rhs = mix(a, mix(b, c)).samples
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())
        assert np.allclose(mix_all([a, b, c]).samples, lhs, rtol=1e-12, atol=1e-15)


class TestWav:
    def test_round_trip(self, tmp_path):
        x = generate_white_noise(4000, -12.0, 3)
        write_wav(tmp_path / "x.wav", x)
        y = read_wav(tmp_path / "x.wav")
        assert y.sample_rate == FS
        assert np.max(np.abs(y.samples - x.samples)) <= 2**-15

    def test_clipping_in_range(self, tmp_path):
        x = SignalBuffer(np.array([1.5, -1.5, 0.999, -1.0]))
        write_wav(tmp_path / "c.wav", x)
        y = read_wav(tmp_path / "c.wav").samples
        assert y.max() <= 1.0 and y.min() >= -1.0

    def _write_raw(self, path, channels, rate, width=2):
        with wave.open(str(path), "wb") as w:
            w.setnchannels(channels)
            w.setsampwidth(width)
            w.setframerate(rate)
            w.writeframes(b"\x00" * (width * channels * 100))

    def test_stereo_rejected(self, tmp_path):
        self._write_raw(tmp_path / "s.wav", 2, FS)
        with pytest.raises(WavFormatError, match="channel"):
            read_wav(tmp_path / "s.wav")

    def test_rate_rejected_names_both(self, tmp_path):
        self._write_raw(tmp_path / "r.wav", 1, 44100)
        with pytest.raises(WavFormatError) as err:
            read_wav(tmp_path / "r.wav")
        assert "44100" in str(err.value) and "16000" in str(err.value)

    def test_8bit_rejected(self, tmp_path):
        self._write_raw(tmp_path / "b.wav", 1, FS, width=1)
        with pytest.raises(WavFormatError):
            read_wav(tmp_path / "b.wav")

    def test_not_a_wav(self, tmp_path):
        (tmp_path / "n.wav").write_bytes(b"hello world")
        with pytest.raises(WavFormatError):
            read_wav(tmp_path / "n.wav")

    def test_csv(self, tmp_path):
        write_signal_csv(tmp_path / "x.csv", SignalBuffer(np.array([0.5, -0.25])))
        lines = (tmp_path / "x.csv").read_text().splitlines()
        assert lines[0] == "t,amplitude"
        assert len(lines) == 3


def test_tone_level():
    x = generate_tone(16000, 1000.0, -3.0)
    assert x.level_db() == pytest.approx(-3.0, abs=0.01)
