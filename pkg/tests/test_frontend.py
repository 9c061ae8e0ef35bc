import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emosid.errors import AudioTooShort, EmptyAudio, NonPositiveEnergy
from emosid.frontend import (ENERGY_FLOOR, FRAME_HOP, FRAME_LENGTH, AudioBuffer, channel_centers, deltas,
                             extract_features, frame_count, frame_signal, mel_energies, mel_filterbank, mfcc,
                             pre_emphasize)

SR = 16000


def tone(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t))


class TestAudioBuffer:
    def test_rejects_wrong_rate(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.zeros(10), 44100)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.array([0.0, 1.5]))

    def test_rejects_stereo_and_nan(self):
        with pytest.raises(ValueError):
            AudioBuffer(np.zeros((2, 10)))
        with pytest.raises(ValueError):
            AudioBuffer(np.array([0.0, np.nan]))


class TestPreEmphasis:
    def test_zero_coeff_is_identity(self):
        a = AudioBuffer(np.linspace(-1, 1, 50))
        np.testing.assert_array_equal(pre_emphasize(a, 0.0).samples, a.samples)

    def test_constant_signal(self):
        out = pre_emphasize(AudioBuffer(np.ones(3)), 0.97).samples
        np.testing.assert_allclose(out, [1.0, 0.03, 0.03], atol=1e-15)

    def test_impulse(self):
        out = pre_emphasize(AudioBuffer(np.array([1.0, 0.0, 0.0])), 0.97).samples
        np.testing.assert_array_equal(out, [1.0, -0.97, 0.0])

    def test_empty(self):
        with pytest.raises(EmptyAudio):
            pre_emphasize(AudioBuffer(np.zeros(0)))


class TestFraming:
    def test_one_second_gives_141_frames(self):
        # enumerate start indices directly rather than trusting the formula
        starts = [s for s in range(0, SR) if s + FRAME_LENGTH <= SR and s % FRAME_HOP == 0]
        assert len(starts) == 141
        assert frame_signal(np.zeros(SR)).shape == (141, 256)

    def test_boundaries(self):
        assert frame_count(256) == 1
        with pytest.raises(AudioTooShort):
            frame_count(255)

    def test_frames_are_hopped_slices(self):
        x = np.arange(1000, dtype=float) / 1000
        f = frame_signal(x)
        np.testing.assert_array_equal(f[2], x[224:480])

    @given(st.integers(256, 50_000))
    def test_count_formula(self, n):
        assert frame_count(n) == (n - 256) // 112 + 1
        assert frame_count(n) == len(range(0, n - 256 + 1, 112))


class TestMelEnergies:
    def test_zero_frame_hits_floor(self):
        np.testing.assert_array_equal(mel_energies(np.zeros(256)), np.full(24, ENERGY_FLOOR))

    def test_sine_peaks_at_nearest_channel(self):
        frame = tone(1000).samples[:256]
        e = mel_energies(frame)
        assert np.argmax(e) == np.argmin(np.abs(channel_centers() - 1000.0))

    def test_quadratic_in_amplitude(self):
        frame = tone(440, amp=0.3).samples[:256]
        a, b = mel_energies(frame), mel_energies(2 * frame)
        unfloored = a > 1e3 * ENERGY_FLOOR
        np.testing.assert_allclose(b[unfloored], 4 * a[unfloored], rtol=1e-12)

    def test_filterbank_shape_and_coverage(self):
        bank = mel_filterbank()
        assert bank.shape == (24, 257)
        assert np.all(bank.max(axis=1) > 0)
        assert not bank.flags.writeable


class TestMfcc:
    def test_unit_energies_give_zero(self):
        np.testing.assert_array_equal(mfcc(np.ones(24)), np.zeros(8))

    @pytest.mark.parametrize("c", [1e-10, 0.37, 5.0, 1e6])
    def test_constant_energies_give_zero(self, c):
        np.testing.assert_allclose(mfcc(np.full(24, c)), 0.0, atol=1e-12)

    def test_single_channel_oracle(self):
        y = np.ones(24)
        y[0] = np.e
        n = np.arange(1, 9)
        np.testing.assert_allclose(mfcc(y), np.cos(np.pi * n / 24 * 0.5), atol=1e-14)

    def test_rejects_non_positive(self):
        with pytest.raises(NonPositiveEnergy):
            mfcc(np.r_[np.ones(23), 0.0])


class TestDeltas:
    def test_constant_sequence(self):
        np.testing.assert_array_equal(deltas(np.tile(np.arange(8.0), (7, 1))), np.zeros((7, 8)))

    def test_ramp_interior_slope(self):
        ramp = np.tile(np.arange(5.0)[:, None], (1, 8))
        d = deltas(ramp, 2)
        np.testing.assert_allclose(d[2], np.ones(8))

    def test_single_frame(self):
        np.testing.assert_array_equal(deltas(np.ones((1, 8))), np.zeros((1, 8)))


class TestExtractFeatures:
    def test_shape(self):
        f = extract_features(tone(300))
        assert f.frames.shape == (141, 16)
        assert f.statics.shape == (141, 8) and f.deltas.shape == (141, 8)

    def test_silence(self):
        f = extract_features(AudioBuffer(np.zeros(SR)))
        assert np.all(f.frames == f.frames[0])
        np.testing.assert_array_equal(f.deltas, 0.0)

    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(3)
        a = AudioBuffer(rng.uniform(-0.5, 0.5, SR))
        assert extract_features(a).frames.tobytes() == extract_features(a).frames.tobytes()

    def test_gain_invariance_of_statics(self):
        rng = np.random.default_rng(4)
        x = 0.4 * rng.standard_normal(SR)
        x = np.clip(x, -1, 1)
        a = extract_features(AudioBuffer(x)).statics
        b = extract_features(AudioBuffer(0.5 * x)).statics
        np.testing.assert_allclose(a, b, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(256, 4000))
    def test_always_finite(self, seed, n):
        x = np.random.default_rng(seed).uniform(-1, 1, n)
        x[: n // 3] = 0.0
        assert np.all(np.isfinite(extract_features(AudioBuffer(x)).frames))
