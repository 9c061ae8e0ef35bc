"""Acoustic front end: 16 kHz PCM audio to 16-dim MFCC+delta sequences.

Framing is 256 samples (16 ms) with a 112-sample hop (9 ms overlap).
Trailing samples that do not fill a whole frame are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import AudioTooShort, EmptyAudio, NonPositiveEnergy

SAMPLE_RATE = 16_000
FRAME_LENGTH = 256
FRAME_HOP = 112
N_FFT = 512
N_CHANNELS = 24
N_CEPS = 8
ENERGY_FLOOR = 1e-10
PRE_EMPHASIS = 0.97
DELTA_WINDOW = 2


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio must be one-dimensional (mono)")
        if self.sample_rate_hz != SAMPLE_RATE:
            raise ValueError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("audio samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @classmethod
    def _derived(cls, samples: np.ndarray, sample_rate_hz: int) -> "AudioBuffer":
        # filtered signals may leave the unit range; skip the range check only
        buf = object.__new__(cls)
        object.__setattr__(buf, "samples", np.asarray(samples, dtype=np.float64))
        object.__setattr__(buf, "sample_rate_hz", sample_rate_hz)
        return buf

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FrontendConfig:
    pre_emphasis: float = PRE_EMPHASIS
    n_channels: int = N_CHANNELS
    n_fft: int = N_FFT
    energy_floor: float = ENERGY_FLOOR
    delta_window: int = DELTA_WINDOW


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame observation vectors, shape (frame_count, 16): statics then deltas."""

    frames: np.ndarray = field(repr=False)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def statics(self) -> np.ndarray:
        return self.frames[:, :N_CEPS]

    @property
    def deltas(self) -> np.ndarray:
        return self.frames[:, N_CEPS:]


def pre_emphasize(audio: AudioBuffer, coeff: float = PRE_EMPHASIS) -> AudioBuffer:
    if len(audio) == 0:
        raise EmptyAudio("cannot pre-emphasize empty audio")
    if not 0.0 <= coeff < 1.0:
        raise ValueError("pre-emphasis coefficient must lie in [0, 1)")
    x = audio.samples
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - coeff * x[:-1]
    return AudioBuffer._derived(y, audio.sample_rate_hz)


def frame_count(n_samples: int) -> int:
    if n_samples < FRAME_LENGTH:
        raise AudioTooShort(f"need at least {FRAME_LENGTH} samples, got {n_samples}")
    return (n_samples - FRAME_LENGTH) // FRAME_HOP + 1


def frame_signal(audio: AudioBuffer | np.ndarray) -> np.ndarray:
    """Split audio into overlapping frames, shape (n_frames, 256)."""
    x = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    n = frame_count(x.size)
    starts = FRAME_HOP * np.arange(n)
    return x[starts[:, None] + np.arange(FRAME_LENGTH)[None, :]]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(n_channels: int = N_CHANNELS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filters over 0 Hz..Nyquist, shape (n_channels, n_fft//2 + 1).

    Weights are evaluated at the exact bin frequencies, so narrow low
    channels never end up empty.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_channels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    bank.setflags(write=False)
    return bank


def channel_centers(n_channels: int = N_CHANNELS, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_channels + 2))
    return edges[1:-1]


def _power_spectra(frames: np.ndarray, n_fft: int) -> np.ndarray:
    window = np.hamming(FRAME_LENGTH)
    spec = np.fft.rfft(frames * window, n=n_fft, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def mel_energies(frame: np.ndarray, n_channels: int = N_CHANNELS, *,
                 n_fft: int = N_FFT, energy_floor: float = ENERGY_FLOOR) -> np.ndarray:
    """Floored mel filterbank energies of one frame (or a stack of frames)."""
    frames = np.asarray(frame, dtype=np.float64)
    if frames.shape[-1] != FRAME_LENGTH:
        raise ValueError(f"frames must have {FRAME_LENGTH} samples")
    power = _power_spectra(frames, n_fft)
    energies = power @ mel_filterbank(n_channels, n_fft).T
    return np.maximum(energies, energy_floor)


@lru_cache(maxsize=8)
def _dct_basis(n_channels: int, n_ceps: int) -> np.ndarray:
    n = np.arange(1, n_ceps + 1)[:, None]
    m = np.arange(1, n_channels + 1)[None, :]
    basis = np.cos(np.pi * n / n_channels * (m - 0.5))
    basis.setflags(write=False)
    return basis


def mfcc(energies: np.ndarray, n_ceps: int = N_CEPS) -> np.ndarray:
    """C(1)..C(n_ceps): unscaled cosine transform of log channel energies.

    C(0) is not emitted. Accepts a single energy vector or a stack.
    """
    y = np.asarray(energies, dtype=np.float64)
    if np.any(y <= 0.0):
        raise NonPositiveEnergy("filterbank energies must be strictly positive")
    return np.log(y) @ _dct_basis(y.shape[-1], n_ceps).T


def deltas(statics: np.ndarray, window: int = DELTA_WINDOW) -> np.ndarray:
    """Regression deltas with edge frames replicated beyond the boundaries."""
    x = np.asarray(statics, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 1:
        raise ValueError("delta input must contain at least one frame")
    if window < 1:
        raise ValueError("delta window must be positive")
    t = x.shape[0]
    padded = np.concatenate([np.repeat(x[:1], window, axis=0), x,
                             np.repeat(x[-1:], window, axis=0)])
    out = np.zeros_like(x)
    for w in range(1, window + 1):
        out += w * (padded[window + w:window + w + t] - padded[window - w:window - w + t])
    return out / (2.0 * sum(w * w for w in range(1, window + 1)))


def extract_features(audio: AudioBuffer, config: FrontendConfig | None = None) -> FeatureSequence:
    cfg = config or FrontendConfig()
    emphasized = pre_emphasize(audio, cfg.pre_emphasis)
    frames = frame_signal(emphasized)
    energies = mel_energies(frames, cfg.n_channels, n_fft=cfg.n_fft,
                            energy_floor=cfg.energy_floor)
    statics = mfcc(energies)
    return FeatureSequence(np.hstack([statics, deltas(statics, cfg.delta_window)]))
