import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emosid.errors import AudioTooShort, TooFewFrames
from emosid.frontend import AudioBuffer, frame_signal
from emosid.prosody import (ENERGY_FLOOR, FIELD_NAMES, estimate_pitch, frame_energy_db, frame_pitch,
                            normalized_autocorrelation, pitch_track, segment_utterance,
                            suprasegmental_observations)

SR = 16000


def sine(freq, n=256, amp=0.5, phase=0.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / SR + phase)


def chirp(f0, f1, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    inst = f0 + (f1 - f0) * t / seconds
    return AudioBuffer(amp * np.sin(2 * np.pi * np.cumsum(inst) / SR))


class TestEstimatePitch:
    def test_200hz_sine(self):
        assert estimate_pitch(sine(200)) == pytest.approx(200.0, abs=3.0)

    @pytest.mark.parametrize("f", [90.0, 120.0, 165.0, 240.0, 310.0, 395.0])
    def test_sine_range(self, f):
        assert estimate_pitch(sine(f, phase=0.3)) == pytest.approx(f, rel=0.015)

    def test_zero_frame_unvoiced(self):
        assert estimate_pitch(np.zeros(256)) is None

    def test_white_noise_unvoiced(self):
        rng = np.random.default_rng(0)
        frames = rng.uniform(-0.5, 0.5, size=(500, 256))
        assert np.mean(frame_pitch(frames) > 0) < 0.01

    def test_quiet_sine_below_silence_floor(self):
        assert estimate_pitch(sine(200, amp=1e-4)) is None


class TestAutocorrelation:
    def test_matches_direct_sum(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(256)
        r = normalized_autocorrelation(x)[0]
        xc = x - x.mean()
        for lag in (1, 40, 100, 192):
            a, b = xc[:-lag], xc[lag:]
            assert r[lag] == pytest.approx(a @ b / np.sqrt((a @ a) * (b @ b)), rel=1e-9)

    def test_periodic_frame_scores_one_at_period(self):
        x = np.tile(np.r_[1.0, np.zeros(79)], 4)[:256]
        assert normalized_autocorrelation(x)[0, 80] == pytest.approx(1.0, abs=1e-9)


class TestEnergy:
    def test_floor(self):
        assert frame_energy_db(np.zeros(256)) == pytest.approx(10 * np.log10(ENERGY_FLOOR))

    def test_unit(self):
        assert frame_energy_db(np.ones(256)) == pytest.approx(0.0, abs=1e-8)

    def test_half(self):
        assert frame_energy_db(np.full(256, 0.5)) == pytest.approx(-6.0206, abs=1e-3)


class TestSegmentation:
    def test_exact(self):
        assert segment_utterance(9, 3) == [range(0, 3), range(3, 6), range(6, 9)]

    def test_remainder_goes_first(self):
        assert [len(r) for r in segment_utterance(10, 3)] == [4, 3, 3]

    def test_too_few(self):
        with pytest.raises(TooFewFrames):
            segment_utterance(2, 3)

    @given(st.integers(1, 500), st.integers(1, 12))
    def test_partition(self, n, k):
        if n < k:
            with pytest.raises(TooFewFrames):
                segment_utterance(n, k)
            return
        ranges = segment_utterance(n, k)
        assert [i for r in ranges for i in r] == list(range(n))
        sizes = [len(r) for r in ranges]
        assert max(sizes) - min(sizes) <= 1 and sizes == sorted(sizes, reverse=True)


class TestObservations:
    def test_constant_sine(self):
        obs = suprasegmental_observations(AudioBuffer(sine(200, SR)))
        assert obs.segments.shape == (3, 7)
        for v in obs.vectors():
            assert v.pitch_mean == pytest.approx(200.0, abs=3.0)
            assert abs(v.pitch_slope) < 5.0
            assert v.voiced_fraction == pytest.approx(1.0)

    def test_silence(self):
        obs = suprasegmental_observations(AudioBuffer(np.zeros(SR)))
        for v in obs.vectors():
            assert v.voiced_fraction == 0.0
            assert v.pitch_mean == v.pitch_slope == v.pitch_range == 0.0

    def test_rising_chirp_slope(self):
        obs = suprasegmental_observations(chirp(150.0, 250.0))
        for v in obs.vectors():
            assert v.pitch_slope == pytest.approx(100.0, rel=0.2)

    def test_log_duration(self):
        obs = suprasegmental_observations(AudioBuffer(sine(200, SR)))
        sizes = [len(r) for r in segment_utterance(141)]
        np.testing.assert_allclose(obs.segments[:, 6], np.log(np.array(sizes) * 112 / SR))

    def test_field_order(self):
        assert FIELD_NAMES[0] == "pitch_mean" and FIELD_NAMES[-1] == "log_duration"

    def test_too_short(self):
        with pytest.raises(AudioTooShort):
            suprasegmental_observations(AudioBuffer(np.zeros(100)))

    @pytest.mark.parametrize("s", [0.5, 0.7, 1.0])
    def test_gain_invariance(self, s):
        a = suprasegmental_observations(chirp(120.0, 180.0, amp=0.8))
        b = suprasegmental_observations(chirp(120.0, 180.0, amp=0.8 * s))
        np.testing.assert_allclose(b.segments[:, 0], a.segments[:, 0], atol=1.0)
        np.testing.assert_allclose(b.segments[:, 3] - a.segments[:, 3], 20 * np.log10(s), atol=1e-6)

    def test_deterministic(self):
        x = chirp(130.0, 170.0)
        assert suprasegmental_observations(x).segments.tobytes() == \
            suprasegmental_observations(x).segments.tobytes()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bounds_on_arbitrary_audio(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, 4000) * (rng.uniform() < 0.5)
        seg = suprasegmental_observations(AudioBuffer(x)).segments
        assert np.all(np.isfinite(seg))
        assert np.all((seg[:, 5] >= 0) & (seg[:, 5] <= 1))
        assert np.all(seg[seg[:, 5] == 0][:, :3] == 0)


class TestPitchTrack:
    def test_isolated_outlier_removed(self):
        frames = frame_signal(AudioBuffer(sine(150, SR)))
        frames[0] = sine(300, 256)
        track = pitch_track(frames)
        assert track[0] == pytest.approx(150.0, abs=2.0)
