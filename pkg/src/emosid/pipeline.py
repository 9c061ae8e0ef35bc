"""Identification: the gender -> emotion -> speaker cascade, the flat
one-stage search and the three ablation variants.

Every argmax breaks ties toward the lowest index in the registry's label
order (genders M before F, emotions in corpus order, speakers by id).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import CorpusManifest, UtteranceRecord, ingest_wav
from .errors import AblationModelsMissing, UnknownLabel
from .hmm import GmmHmm, log_forward_batch
from .registry import ModelRegistry, Observation, observe
from .sphmm import Sphmm, check_alpha, fuse

APPROACHES = ("three-stage", "one-stage")
ABLATIONS = ("exp1", "exp2", "exp3")


@dataclass(frozen=True)
class Label:
    gender: str
    emotion: str
    speaker_id: int

    @property
    def speaker(self) -> tuple[str, int]:
        return self.gender, self.speaker_id


@dataclass
class IdentificationResult:
    label: Label
    approach: str
    alpha: float
    # stage name -> list of (candidate key, score) in label order
    stage_scores: dict[str, list] = field(default_factory=dict)


def raw_score(model: GmmHmm, obs: np.ndarray, cache: dict | None = None) -> float:
    if cache is not None and model in cache:
        return cache[model]
    value = float(log_forward_batch(model, [obs])[0])
    if cache is not None:
        cache[model] = value
    return value


def prime_cache(registry: ModelRegistry, observations: Sequence[Observation]) -> None:
    """Score every utterance under every model in one batched pass per model."""
    if not observations:
        return
    acoustic = [o.acoustic for o in observations]
    prosodic = [o.prosodic for o in observations]
    for hmm in registry.all_hmms():
        is_acoustic = hmm.feature_dim == acoustic[0].shape[1]
        todo = [i for i, o in enumerate(observations) if hmm not in o.cache]
        if not todo:
            continue
        obs = [(acoustic if is_acoustic else prosodic)[i] for i in todo]
        for i, ll in zip(todo, log_forward_batch(hmm, obs)):
            observations[i].cache[hmm] = float(ll)


def sphmm_score(model: Sphmm, obs: Observation, alpha: float, normalize: bool = True) -> float:
    a = raw_score(model.acoustic, obs.acoustic, obs.cache) if alpha < 1.0 else 0.0
    s = raw_score(model.suprasegmental, obs.prosodic, obs.cache) if alpha > 0.0 else 0.0
    if normalize:
        a /= obs.acoustic.shape[0]
        s /= obs.prosodic.shape[0]
    return float(fuse(a, s, alpha))


def _argmax(candidates: list, scores: list[float]):
    return candidates[int(np.argmax(np.asarray(scores)))]


def _check_gender(registry: ModelRegistry, gender: str | None) -> None:
    if gender is not None and gender not in registry.genders:
        raise UnknownLabel(f"unknown gender {gender!r}")


def _check_emotion(registry: ModelRegistry, emotion: str | None) -> None:
    if emotion is not None and emotion not in registry.emotions:
        raise UnknownLabel(f"unknown emotion {emotion!r}")


def identify_gender(registry: ModelRegistry, obs: Observation) -> tuple[str, list]:
    scores = [raw_score(registry.gender_models[g], obs.acoustic, obs.cache) for g in registry.genders]
    return _argmax(list(registry.genders), scores), list(zip(registry.genders, scores))


def identify_emotion(registry: ModelRegistry, obs: Observation, gender: str, alpha: float,
                     normalize: bool = True) -> tuple[str, list]:
    _check_gender(registry, gender)
    scores = [sphmm_score(registry.emotion_models[(gender, e)], obs, alpha, normalize)
              for e in registry.emotions]
    return _argmax(list(registry.emotions), scores), list(zip(registry.emotions, scores))


def identify_speaker(registry: ModelRegistry, obs: Observation, gender: str,
                     emotion: str) -> tuple[int, list]:
    _check_gender(registry, gender)
    _check_emotion(registry, emotion)
    speakers = list(registry.speakers)
    scores = [raw_score(registry.speaker_models[(gender, emotion, s)], obs.acoustic, obs.cache)
              for s in speakers]
    return _argmax(speakers, scores), list(zip(speakers, scores))


def identify_three_stage(registry: ModelRegistry, obs: Observation, alpha: float = 0.5,
                         normalize: bool = True, gender: str | None = None,
                         emotion: str | None = None) -> IdentificationResult:
    """Gender, then emotion given gender, then speaker given both.

    ``gender`` and ``emotion`` replace the corresponding stage decision; this
    drives the oracle-conditioned and worst-case evaluations.
    """
    alpha = check_alpha(alpha)
    _check_gender(registry, gender)
    _check_emotion(registry, emotion)
    stages = {}
    g_hat, stages["gender"] = identify_gender(registry, obs)
    g = gender if gender is not None else g_hat
    e_hat, stages["emotion"] = identify_emotion(registry, obs, g, alpha, normalize)
    e = emotion if emotion is not None else e_hat
    s, stages["speaker"] = identify_speaker(registry, obs, g, e)
    return IdentificationResult(Label(g, e, s), "three-stage", alpha, stages)


def identify_one_stage(registry: ModelRegistry, obs: Observation, alpha: float = 0.5,
                       normalize: bool = True) -> IdentificationResult:
    """Flat argmax over every (gender, speaker, emotion) model."""
    alpha = check_alpha(alpha)
    keys = [(g, s, e) for g in registry.genders for s in registry.speakers for e in registry.emotions]
    scores = [sphmm_score(registry.one_stage_models[k], obs, alpha, normalize) for k in keys]
    g, s, e = _argmax(keys, scores)
    return IdentificationResult(Label(g, e, s), "one-stage", alpha, {"joint": list(zip(keys, scores))})


def identify_ablation(registry: ModelRegistry, mode: str, obs: Observation, alpha: float = 0.5,
                      normalize: bool = True, gender: str | None = None) -> IdentificationResult:
    """Cascade variants with a stage removed.

    exp1: gender stage, then speakers of that gender from emotion-pooled models.
    exp2: gender-independent emotion stage, then speakers of both genders
          under that emotion.
    exp3: speakers of both genders from emotion-pooled models.

    The reported emotion is the emotion-stage decision where one exists and
    the empty string otherwise.
    """
    alpha = check_alpha(alpha)
    if mode not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}, got {mode!r}")
    if not registry.has_ablations:
        raise AblationModelsMissing("registry was trained without ablation models")
    _check_gender(registry, gender)
    stages = {}
    pooled = registry.pooled_speaker_models
    if mode == "exp1":
        g_hat, stages["gender"] = identify_gender(registry, obs)
        g = gender if gender is not None else g_hat
        keys = [(g, s) for s in registry.speakers]
        scores = [sphmm_score(pooled[k], obs, alpha, normalize) for k in keys]
        g, s = _argmax(keys, scores)
        label = Label(g, "", s)
    elif mode == "exp2":
        emotions = list(registry.emotions)
        e_scores = [sphmm_score(registry.pooled_emotion_models[e], obs, alpha, normalize) for e in emotions]
        e = _argmax(emotions, e_scores)
        stages["emotion"] = list(zip(emotions, e_scores))
        keys = [(g, s) for g in registry.genders for s in registry.speakers]
        # a speaker's utterances in one emotion are exactly a one-stage cell
        scores = [sphmm_score(registry.one_stage_models[(g, s, e)], obs, alpha, normalize) for g, s in keys]
        g, s = _argmax(keys, scores)
        label = Label(g, e, s)
    else:
        keys = [(g, s) for g in registry.genders for s in registry.speakers]
        scores = [sphmm_score(pooled[k], obs, alpha, normalize) for k in keys]
        g, s = _argmax(keys, scores)
        label = Label(g, "", s)
    stages["speaker"] = list(zip(keys, scores))
    return IdentificationResult(label, mode, alpha, stages)


def identify(registry: ModelRegistry, obs: Observation, approach: str = "three-stage",
             alpha: float = 0.5, normalize: bool = True, ablation: str | None = None) -> IdentificationResult:
    if ablation is not None:
        return identify_ablation(registry, ablation, obs, alpha, normalize)
    if approach == "three-stage":
        return identify_three_stage(registry, obs, alpha, normalize)
    if approach == "one-stage":
        return identify_one_stage(registry, obs, alpha, normalize)
    raise ValueError(f"approach must be one of {APPROACHES}, got {approach!r}")


def observe_records(manifest: CorpusManifest, records: Sequence[UtteranceRecord],
                    threads: int = 1) -> list[Observation]:
    """Read and featurize each record's audio, in record order."""
    def one(rec):
        return observe(ingest_wav(manifest.path_of(rec)))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, records))
    return [one(r) for r in records]
