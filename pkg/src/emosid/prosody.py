"""Suprasegmental (prosodic) observations.

Each utterance is framed like the acoustic front end, pitch and energy are
measured per frame, and the frames are pooled into three contiguous
segments. Every segment yields a 7-dim vector:

    pitch_mean, pitch_slope, pitch_range, energy_mean, energy_range,
    voiced_fraction, log_duration
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np
from scipy.ndimage import median_filter

from .errors import TooFewFrames
from .frontend import FRAME_HOP, FRAME_LENGTH, SAMPLE_RATE, AudioBuffer, frame_signal

PITCH_MIN_HZ = 60.0
PITCH_MAX_HZ = 400.0
VOICING_THRESHOLD = 0.3
# shortest overlap the correlation is computed over; caps the longest lag
MIN_OVERLAP = 64
MAX_ZERO_CROSSING_RATE = 0.3
SILENCE_DB = -60.0
# median smoothing over voiced frames removes isolated octave jumps
SMOOTHING_WIDTH = 9
ENERGY_FLOOR = 1e-10
N_SEGMENTS = 3
N_PROSODIC = 7

FIELD_NAMES = ("pitch_mean", "pitch_slope", "pitch_range", "energy_mean",
               "energy_range", "voiced_fraction", "log_duration")


@dataclass(frozen=True)
class ProsodicVector:
    pitch_mean: float
    pitch_slope: float
    pitch_range: float
    energy_mean: float
    energy_range: float
    voiced_fraction: float
    log_duration: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class SuprasegmentalSequence:
    """Prosodic observation stream, shape (n_segments, 7)."""

    segments: np.ndarray

    def __len__(self):
        return self.segments.shape[0]

    def vectors(self) -> list[ProsodicVector]:
        return [ProsodicVector(*map(float, row)) for row in self.segments]


def _lag_bounds(frame_length: int = FRAME_LENGTH) -> tuple[int, int]:
    lo = int(np.floor(SAMPLE_RATE / PITCH_MAX_HZ))
    hi = min(int(np.ceil(SAMPLE_RATE / PITCH_MIN_HZ)), frame_length - MIN_OVERLAP)
    return lo, hi


def normalized_autocorrelation(frames: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of each frame with its own lagged copy.

    Entry [i, tau] is sum x[n] x[n+tau] / sqrt(E_head * E_tail) over the
    overlapping part, so a perfectly periodic frame scores 1 at its period
    regardless of how many samples overlap.
    """
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    x = x - x.mean(axis=1, keepdims=True)
    n = x.shape[1]
    spec = np.fft.rfft(x, n=2 * n, axis=1)
    acf = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, n=2 * n, axis=1)[:, :n]
    csum = np.cumsum(x * x, axis=1)
    total = csum[:, -1:]
    lags = np.arange(n)
    head = csum[:, n - 1 - lags]
    tail = total - np.concatenate([np.zeros((x.shape[0], 1)), csum[:, :-1]], axis=1)
    denom = np.sqrt(np.maximum(head * tail, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0.0, acf / denom, 0.0)
    return out


def frame_energy_db(frame: np.ndarray, floor: float = ENERGY_FLOOR) -> np.ndarray | float:
    x = np.asarray(frame, dtype=np.float64)
    db = 10.0 * np.log10(np.mean(x * x, axis=-1) + floor)
    return float(db) if np.ndim(db) == 0 else db


def zero_crossing_rate(frames: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(frames)
    signs = np.signbit(x)
    return np.mean(signs[:, 1:] != signs[:, :-1], axis=1)


def frame_pitch(frames: np.ndarray) -> np.ndarray:
    """Pitch in Hz per frame; 0.0 marks unvoiced frames."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    lo, hi = _lag_bounds(frames.shape[1])
    r = normalized_autocorrelation(frames)
    energy = frame_energy_db(frames)
    zcr = zero_crossing_rate(frames)
    out = np.zeros(frames.shape[0])
    for i in range(frames.shape[0]):
        if energy[i] < SILENCE_DB or zcr[i] > MAX_ZERO_CROSSING_RATE:
            continue
        lag = _pick_lag(r[i], lo, hi)
        if lag is not None:
            out[i] = SAMPLE_RATE / lag
    return out


def _pick_lag(r: np.ndarray, lo: int, hi: int) -> float | None:
    seg = r[lo - 1:hi + 2]
    core = seg[1:-1]
    peaks = np.flatnonzero((core >= seg[:-2]) & (core > seg[2:]))
    if peaks.size == 0:
        return None
    best = core[peaks].max()
    if best < VOICING_THRESHOLD:
        return None
    # earliest peak close to the best one guards against period doubling
    k = peaks[np.argmax(core[peaks] >= 0.9 * best)]
    a, b, c = seg[k], seg[k + 1], seg[k + 2]
    denom = a - 2.0 * b + c
    shift = 0.5 * (a - c) / denom if denom < 0.0 else 0.0
    return lo + k + float(np.clip(shift, -0.5, 0.5))


def pitch_track(frames: np.ndarray, width: int = SMOOTHING_WIDTH) -> np.ndarray:
    """Per-frame pitch with a running median applied across the voiced frames."""
    pitch = frame_pitch(frames)
    voiced = pitch > 0.0
    if width > 1 and voiced.any():
        pitch[voiced] = median_filter(pitch[voiced], size=width, mode="reflect")
    return pitch


def estimate_pitch(frame: np.ndarray) -> float | None:
    """Pitch of a single 256-sample frame in Hz, or None when unvoiced."""
    f0 = frame_pitch(np.asarray(frame)[None, :])[0]
    return float(f0) if f0 > 0.0 else None


def segment_utterance(n_frames: int, n_segments: int = N_SEGMENTS) -> list[range]:
    if n_segments < 1:
        raise ValueError("n_segments must be positive")
    if n_frames < n_segments:
        raise TooFewFrames(f"{n_frames} frames cannot fill {n_segments} segments")
    base, extra = divmod(n_frames, n_segments)
    ranges, start = [], 0
    for k in range(n_segments):
        size = base + (1 if k < extra else 0)
        ranges.append(range(start, start + size))
        start += size
    return ranges


def _pool(pitch: np.ndarray, energy: np.ndarray, times: np.ndarray) -> np.ndarray:
    voiced = pitch > 0.0
    nv = int(voiced.sum())
    mean = slope = spread = 0.0
    if nv:
        f0 = pitch[voiced]
        mean = float(f0.mean())
        spread = float(f0.max() - f0.min())
        if nv >= 2:
            t = times[voiced]
            tc = t - t.mean()
            denom = float(tc @ tc)
            if denom > 0.0:
                slope = float(tc @ (f0 - mean)) / denom
    duration = pitch.size * FRAME_HOP / SAMPLE_RATE
    return np.array([mean, slope, spread, energy.mean(), energy.max() - energy.min(),
                     nv / pitch.size, np.log(duration)])


def suprasegmental_observations(audio: AudioBuffer, n_segments: int = N_SEGMENTS) -> SuprasegmentalSequence:
    frames = frame_signal(audio)
    pitch = pitch_track(frames)
    energy = frame_energy_db(frames)
    times = (FRAME_HOP * np.arange(frames.shape[0]) + FRAME_LENGTH / 2) / SAMPLE_RATE
    rows = [_pool(pitch[r.start:r.stop], energy[r.start:r.stop], times[r.start:r.stop])
            for r in segment_utterance(frames.shape[0], n_segments)]
    return SuprasegmentalSequence(np.vstack(rows))
