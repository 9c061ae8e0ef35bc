"""Parametric source-filter generator for synthetic emotional speech corpora.

Every utterance is a glottal pulse train at a speaker- and emotion-dependent
pitch contour, passed through three time-varying formant resonators that
walk through a sentence-specific vowel sequence. Unvoiced noise gaps sit
between vowels. Each sentence visits every vowel of the inventory, in a
sentence-specific order, so test sentences differ in text from training
sentences without introducing unseen sounds.

Randomness is drawn from per-record seed sequences, so output is identical
whether records are rendered serially or in parallel.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .corpus import (EMOTIONS, GENDERS, CorpusDims, CorpusManifest, UtteranceRecord, build_manifest,
                     save_manifest, split_for, write_wav)
from .frontend import SAMPLE_RATE

# (F1, F2, F3) in Hz for an adult male vocal tract
VOWELS = ((730.0, 1090.0, 2440.0), (270.0, 2290.0, 3010.0), (300.0, 870.0, 2240.0),
          (530.0, 1840.0, 2480.0), (570.0, 840.0, 2410.0))
BANDWIDTHS = (70.0, 100.0, 140.0)
BLOCK = 80
GAP_SECONDS = 0.03
TRANSITION_SECONDS = 0.02
BASE_RMS = 0.05
NOISE_FLOOR = 1e-4
GENDER_FORMANT_SCALE = {"M": 1.0, "F": 1.17}


@dataclass(frozen=True)
class EmotionStyle:
    """Prosodic and voice-quality modulation applied on top of a speaker's voice.

    pitch_shift, pitch_variability and rate are multiplicative factors;
    energy_db is added to the level; pitch_slope is the relative pitch change
    across the utterance; tilt moves the glottal low-pass pole (positive is
    brighter).
    """

    pitch_shift: float = 1.0
    pitch_variability: float = 1.0
    energy_db: float = 0.0
    rate: float = 1.0
    pitch_slope: float = 0.0
    tilt: float = 0.0

    def __post_init__(self):
        if min(self.pitch_shift, self.pitch_variability, self.rate) <= 0:
            raise ValueError("emotion factors must be positive")


STEREOTYPES = {
    "neutral": EmotionStyle(1.0, 1.0, 0.0, 1.0, -0.05, 0.0),
    "anger": EmotionStyle(1.10, 1.8, 6.0, 1.25, 0.10, 0.06),
    "sadness": EmotionStyle(0.90, 0.4, -6.0, 0.78, -0.15, -0.06),
    "happiness": EmotionStyle(1.10, 1.5, 3.0, 1.12, 0.12, 0.03),
    "disgust": EmotionStyle(0.93, 0.7, -2.5, 0.88, -0.08, -0.03),
    "fear": EmotionStyle(1.06, 1.3, 1.0, 1.18, 0.05, 0.02),
}

# same level, rate and voice quality everywhere; only the pitch contour differs
PITCH_ONLY = {
    "neutral": EmotionStyle(1.0, 1.0, 0.0, 1.0, 0.0, 0.0),
    "anger": EmotionStyle(1.10, 1.8, 0.0, 1.0, 0.15, 0.0),
    "sadness": EmotionStyle(0.90, 0.4, 0.0, 1.0, -0.15, 0.0),
    "happiness": EmotionStyle(1.08, 1.5, 0.0, 1.0, 0.08, 0.0),
    "disgust": EmotionStyle(0.94, 0.7, 0.0, 1.0, -0.08, 0.0),
    "fear": EmotionStyle(1.04, 1.3, 0.0, 1.0, 0.04, 0.0),
}


@dataclass(frozen=True)
class SynthSpec:
    speakers_per_gender: int = 3
    emotions: tuple[str, ...] = EMOTIONS[:3]
    sentences: int = 4
    repetitions: int = 3
    pitch_ranges: dict = field(default_factory=lambda: {"M": (90.0, 140.0), "F": (180.0, 260.0)})
    formant_spread: float = 0.12
    styles: dict = field(default_factory=lambda: dict(STEREOTYPES))
    duration_range: tuple[float, float] = (0.95, 1.15)
    pitch_jitter: float = 0.015
    formant_jitter: float = 0.01
    duration_jitter: float = 0.04
    rng_seed: int = 0
    separable: bool = False
    csd_shaped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "emotions", tuple(self.emotions))
        object.__setattr__(self, "duration_range", tuple(float(x) for x in self.duration_range))
        object.__setattr__(self, "pitch_ranges",
                           {g: tuple(float(x) for x in r) for g, r in self.pitch_ranges.items()})
        styles = {k: v if isinstance(v, EmotionStyle) else EmotionStyle(**v) for k, v in self.styles.items()}
        object.__setattr__(self, "styles", styles)
        if min(self.speakers_per_gender, self.sentences, self.repetitions, len(self.emotions)) < 1:
            raise ValueError("corpus dimensions must be positive")
        if len(set(self.emotions)) != len(self.emotions):
            raise ValueError("duplicate emotion names")
        missing = [e for e in self.emotions if e not in self.styles]
        if missing:
            raise ValueError(f"no emotion style configured for {missing}")
        if set(self.pitch_ranges) != set(GENDERS):
            raise ValueError("pitch ranges needed for both genders")
        for lo, hi in self.pitch_ranges.values():
            if not 0 < lo < hi:
                raise ValueError("pitch ranges must be positive and increasing")
        if not 0 < self.duration_range[0] <= self.duration_range[1]:
            raise ValueError("duration range must be positive and increasing")
        if min(self.formant_spread, self.pitch_jitter, self.formant_jitter, self.duration_jitter) < 0:
            raise ValueError("spreads and jitters must be non-negative")
        if self.separable:
            (mlo, mhi), (flo, fhi) = self.pitch_ranges["M"], self.pitch_ranges["F"]
            if not (mhi < flo or fhi < mlo):
                raise ValueError("separable preset needs disjoint gender pitch ranges")
        for g in GENDERS:
            self.base_pitch_bounds(g)

    @property
    def dims(self) -> CorpusDims:
        return CorpusDims(self.speakers_per_gender, self.emotions, self.sentences, self.repetitions)

    def base_pitch_bounds(self, gender: str) -> tuple[float, float]:
        """Speaker base pitches for which every emotion's mean pitch stays in range."""
        lo, hi = self.pitch_ranges[gender]
        shifts = [self.styles[e].pitch_shift for e in self.emotions]
        margin = 1.0 + 2.0 * self.pitch_jitter + 0.03
        b_lo, b_hi = lo / min(shifts) * margin, hi / max(shifts) / margin
        if b_lo > b_hi:
            raise ValueError(f"{gender} pitch range too narrow for the configured emotion pitch shifts")
        return b_lo, b_hi

    def to_dict(self) -> dict:
        out = asdict(self)
        out["emotions"] = list(self.emotions)
        out["duration_range"] = list(self.duration_range)
        out["pitch_ranges"] = {g: list(r) for g, r in self.pitch_ranges.items()}
        out["styles"] = {k: asdict(v) for k, v in self.styles.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        return cls(**data)


def preset(name: str, seed: int = 0) -> SynthSpec:
    """Named corpus configurations."""
    if name == "desk":
        return SynthSpec(3, EMOTIONS[:3], 4, 3, rng_seed=seed, separable=True)
    if name == "separable":
        return SynthSpec(4, EMOTIONS[:3], 4, 5, rng_seed=seed, separable=True)
    if name == "csd-shape":
        return SynthSpec(25, EMOTIONS, 8, 9, rng_seed=seed, separable=True, csd_shaped=True)
    if name == "prosody-only":
        return SynthSpec(3, EMOTIONS[:3], 4, 4, styles=dict(PITCH_ONLY), rng_seed=seed, separable=True)
    raise ValueError(f"unknown preset {name!r}; choose desk, separable, csd-shape or prosody-only")


PRESETS = ("desk", "separable", "csd-shape", "prosody-only")


@dataclass(frozen=True)
class SpeakerVoice:
    base_pitch: float
    formant_scales: tuple[float, float, float]
    level_db: float


def _seq(spec: SynthSpec, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.rng_seed, *key]))


def speaker_voice(spec: SynthSpec, gender: str, speaker_id: int) -> SpeakerVoice:
    """Voices spread evenly over pitch and formant scale, with seeded per-formant detail."""
    n = spec.speakers_per_gender
    g = GENDERS.index(gender)
    order = _seq(spec, 2, g).permutation(n)
    rank = order[speaker_id - 1]
    pos = 0.5 if n == 1 else rank / (n - 1)
    lo, hi = spec.base_pitch_bounds(gender)
    # pitch and formant rank run in opposite directions so no two speakers share both
    pitch = lo + (hi - lo) * pos
    scale = 1.0 + spec.formant_spread * (1.0 - 2.0 * pos)
    rng = _seq(spec, 3, g, speaker_id)
    detail = rng.uniform(-0.03, 0.03, size=3)
    return SpeakerVoice(float(pitch), tuple(float(scale * (1.0 + d)) for d in detail),
                        float(rng.uniform(-1.0, 1.0)))


def sentence_plan(spec: SynthSpec, sentence_id: int) -> tuple[np.ndarray, float]:
    """Vowel order and nominal duration (seconds) for a sentence."""
    rng = _seq(spec, 1, sentence_id)
    order = rng.permutation(len(VOWELS))
    duration = rng.uniform(*spec.duration_range)
    return order, float(duration)


def _resonator(freq: float, bandwidth: float) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bandwidth / SAMPLE_RATE)
    a = np.array([1.0, -2.0 * r * np.cos(2.0 * np.pi * freq / SAMPLE_RATE), r * r])
    return np.array([a.sum()]), a


def render_utterance(spec: SynthSpec, gender: str, speaker_id: int, emotion: str,
                     sentence_id: int, repetition: int) -> np.ndarray:
    voice = speaker_voice(spec, gender, speaker_id)
    style = spec.styles[emotion]
    order, nominal = sentence_plan(spec, sentence_id)
    rng = _seq(spec, 4, GENDERS.index(gender), speaker_id, spec.emotions.index(emotion),
               sentence_id, repetition)

    duration = nominal / style.rate * (1.0 + rng.uniform(-1, 1) * spec.duration_jitter)
    n = int(round(duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE

    # pitch contour: level, linear slope across the utterance, slow intonation wave
    f0_mean = voice.base_pitch * style.pitch_shift * (1.0 + rng.uniform(-1, 1) * spec.pitch_jitter)
    phase0 = rng.uniform(0, 2 * np.pi)
    wave = 0.05 * style.pitch_variability * np.sin(2 * np.pi * 1.5 * t / duration + phase0)
    f0 = f0_mean * (1.0 + style.pitch_slope * (t / duration - 0.5) + wave)

    # vowel segments separated by unvoiced gaps
    n_vowels = len(order)
    gap = int(GAP_SECONDS / style.rate * SAMPLE_RATE)
    seg = (n - gap * (n_vowels - 1)) // n_vowels
    voiced = np.zeros(n, dtype=bool)
    vowel_at = np.zeros(n, dtype=np.int64)
    for i in range(n_vowels):
        start = i * (seg + gap)
        stop = n if i == n_vowels - 1 else start + seg
        voiced[start:stop] = True
        vowel_at[start:] = i

    phase = np.cumsum(f0) / SAMPLE_RATE
    pulses = np.zeros(n)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0
    pole = np.clip(0.92 - style.tilt, 0.5, 0.98)
    glottal = lfilter([1.0], [1.0, -2 * pole, pole * pole], pulses)
    glottal = np.diff(glottal, prepend=0.0)  # lip radiation
    noise = rng.standard_normal(n)
    excitation = np.where(voiced, glottal, 0.02 * noise)

    # formant tracks with linear transitions between vowels
    scales = np.array(voice.formant_scales) * GENDER_FORMANT_SCALE[gender]
    jitter = 1.0 + rng.uniform(-1, 1, size=3) * spec.formant_jitter
    targets = np.array([VOWELS[v] for v in order]) * scales * jitter
    centers = np.array([i * (seg + gap) + seg / 2 for i in range(n_vowels)])
    trans = TRANSITION_SECONDS * SAMPLE_RATE
    out = np.empty(n)
    states = [np.zeros(2) for _ in range(3)]
    for b0 in range(0, n, BLOCK):
        b1 = min(n, b0 + BLOCK)
        mid = (b0 + b1) / 2
        i = int(vowel_at[min(int(mid), n - 1)])
        freqs = targets[i]
        if i + 1 < n_vowels:
            boundary = centers[i] + (seg + gap) / 2
            w = np.clip((mid - (boundary - trans)) / (2 * trans), 0.0, 1.0)
            freqs = (1 - w) * freqs + w * targets[i + 1]
        if i > 0:
            boundary = centers[i] - (seg + gap) / 2
            w = np.clip((boundary + trans - mid) / (2 * trans), 0.0, 1.0)
            freqs = (1 - w) * freqs + w * targets[i - 1]
        block = excitation[b0:b1]
        for k in range(3):
            b, a = _resonator(min(freqs[k], 0.45 * SAMPLE_RATE), BANDWIDTHS[k])
            block, states[k] = lfilter(b, a, block, zi=states[k])
        out[b0:b1] = block

    level = BASE_RMS * 10.0 ** ((style.energy_db + voice.level_db + rng.uniform(-0.5, 0.5)) / 20.0)
    rms = np.sqrt(np.mean(out[voiced] ** 2))
    out *= level / rms
    out += NOISE_FLOOR * rng.standard_normal(n)
    return np.clip(out, -0.99, 0.99)


def corpus_records(spec: SynthSpec) -> list[UtteranceRecord]:
    records = []
    for gender in GENDERS:
        for speaker in range(1, spec.speakers_per_gender + 1):
            for emotion in spec.emotions:
                for sentence in range(1, spec.sentences + 1):
                    for rep in range(1, spec.repetitions + 1):
                        path = f"{gender}/spk{speaker:02d}/{emotion}/s{sentence}_r{rep}.wav"
                        records.append(UtteranceRecord(path, speaker, gender, emotion, sentence, rep,
                                                       split_for(sentence, spec.sentences)))
    return records


def plan_manifest(spec: SynthSpec, out_dir: str | Path = ".") -> CorpusManifest:
    """The manifest synthesize_corpus would write, without rendering audio."""
    return build_manifest(corpus_records(spec), spec.dims, Path(out_dir), spec.csd_shaped)


def synthesize_corpus(spec: SynthSpec, out_dir: str | Path, threads: int = 1,
                      manifest_name: str = "manifest.csv") -> CorpusManifest:
    out_dir = Path(out_dir)
    manifest = plan_manifest(spec, out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"{out_dir} is not writable")

    def render(rec: UtteranceRecord) -> None:
        path = out_dir / rec.file_path
        path.parent.mkdir(parents=True, exist_ok=True)
        audio = render_utterance(spec, rec.gender, rec.speaker_id, rec.emotion, rec.sentence_id,
                                 rec.repetition)
        write_wav(path, audio)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(render, manifest.records))
    else:
        for rec in manifest.records:
            render(rec)
    save_manifest(manifest, out_dir / manifest_name)
    return manifest


def with_seed(spec: SynthSpec, seed: int) -> SynthSpec:
    return replace(spec, rng_seed=seed)
