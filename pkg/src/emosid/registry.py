"""The trained model hierarchy and its on-disk layout.

A registry directory holds ``manifest.json`` (keys, dimensions, training
counts, config hash, format version) and one ``.npz`` file per model.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import GENDERS, CorpusDims, UtteranceRecord
from .errors import FormatVersionError, InsufficientData, InvariantViolation, MissingCell, ParseError
from .frontend import AudioBuffer, extract_features
from .hmm import GmmHmm, TrainingConfig, baum_welch, init_model
from .prosody import suprasegmental_observations
from .sphmm import ACOUSTIC_STATES, Sphmm, train_sphmm

log = logging.getLogger(__name__)

REGISTRY_FORMAT = 1
ROLES = ("gender", "emotion", "speaker", "one_stage", "pooled_speaker", "pooled_emotion")


@dataclass(eq=False)
class Observation:
    """Acoustic (T, 16) and prosodic (3, 7) observations of one utterance.

    Raw log-likelihoods are memoized per model object, so an utterance is
    scored at most once by each model however many alphas are evaluated.
    """

    acoustic: np.ndarray
    prosodic: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


def observe(audio: AudioBuffer) -> Observation:
    return Observation(extract_features(audio).frames, suprasegmental_observations(audio).segments)


@dataclass(frozen=True)
class RegistryConfig:
    acoustic: TrainingConfig = TrainingConfig()
    prosodic: TrainingConfig = TrainingConfig(n_mixtures=1, variance_floor_scale=1e-2)
    ablations: bool = True

    def to_dict(self) -> dict:
        return {"acoustic": asdict(self.acoustic), "prosodic": asdict(self.prosodic),
                "ablations": self.ablations}

    @classmethod
    def from_dict(cls, data: dict) -> "RegistryConfig":
        return cls(TrainingConfig(**data["acoustic"]), TrainingConfig(**data["prosodic"]),
                   bool(data.get("ablations", True)))

    def digest(self, dims: CorpusDims) -> str:
        payload = json.dumps({"config": self.to_dict(), "dims": asdict(dims)}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(eq=False)
class ModelRegistry:
    dims: CorpusDims
    gender_models: dict
    emotion_models: dict  # (gender, emotion) -> Sphmm
    speaker_models: dict  # (gender, emotion, speaker) -> GmmHmm
    one_stage_models: dict  # (gender, speaker, emotion) -> Sphmm
    pooled_speaker_models: dict | None = None  # (gender, speaker) -> Sphmm
    pooled_emotion_models: dict | None = None  # emotion -> Sphmm
    training_counts: dict = field(default_factory=dict)
    config_hash: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def genders(self) -> tuple[str, ...]:
        return GENDERS

    @property
    def emotions(self) -> tuple[str, ...]:
        return self.dims.emotions

    @property
    def speakers(self) -> range:
        return range(1, self.dims.speakers_per_gender + 1)

    @property
    def has_ablations(self) -> bool:
        return self.pooled_speaker_models is not None and self.pooled_emotion_models is not None

    def expected_keys(self, role: str) -> list:
        g, e, s = self.genders, self.emotions, self.speakers
        return {
            "gender": list(g),
            "emotion": [(a, b) for a in g for b in e],
            "speaker": [(a, b, c) for a in g for b in e for c in s],
            "one_stage": [(a, c, b) for a in g for c in s for b in e],
            "pooled_speaker": [(a, c) for a in g for c in s],
            "pooled_emotion": list(e),
        }[role]

    def models(self, role: str) -> dict | None:
        return getattr(self, f"{role}_models")

    def validate(self) -> None:
        for role in ROLES:
            table = self.models(role)
            if table is None and role in ("pooled_speaker", "pooled_emotion"):
                continue
            if table is None or set(table) != set(self.expected_keys(role)):
                raise InvariantViolation(f"registry {role} models do not match the corpus dimensions")

    def counts(self) -> dict[str, int]:
        return {role: len(self.models(role) or {}) for role in ROLES}

    def all_hmms(self) -> list[GmmHmm]:
        out, seen = [], set()
        for role in ROLES:
            for model in (self.models(role) or {}).values():
                for hmm in ((model.acoustic, model.suprasegmental) if isinstance(model, Sphmm) else (model,)):
                    if id(hmm) not in seen:
                        seen.add(id(hmm))
                        out.append(hmm)
        return out


# -- training ----------------------------------------------------------


def training_plan(records: Sequence[UtteranceRecord], dims: CorpusDims,
                  ablations: bool = True) -> dict[str, dict]:
    """Utterance indices feeding every model, keyed by role then model key.

    Raises MissingCell when any (gender, emotion, speaker) cell has no data.
    """
    cells: dict[tuple, list[int]] = {}
    for i, r in enumerate(records):
        cells.setdefault((r.gender, r.emotion, r.speaker_id), []).append(i)
    speakers = range(1, dims.speakers_per_gender + 1)
    for g in GENDERS:
        for e in dims.emotions:
            for s in speakers:
                if not cells.get((g, e, s)):
                    raise MissingCell(f"no training data for gender={g} emotion={e} speaker={s}")

    def pool(pred) -> list[int]:
        return sorted(i for key, idx in cells.items() if pred(*key) for i in idx)

    plan = {
        "gender": {g: pool(lambda a, b, c, g=g: a == g) for g in GENDERS},
        "emotion": {(g, e): pool(lambda a, b, c, g=g, e=e: a == g and b == e)
                    for g in GENDERS for e in dims.emotions},
        "speaker": {(g, e, s): cells[(g, e, s)] for g in GENDERS for e in dims.emotions for s in speakers},
        "one_stage": {(g, s, e): cells[(g, e, s)] for g in GENDERS for s in speakers for e in dims.emotions},
    }
    if ablations:
        plan["pooled_speaker"] = {(g, s): pool(lambda a, b, c, g=g, s=s: a == g and c == s)
                                  for g in GENDERS for s in speakers}
        plan["pooled_emotion"] = {e: pool(lambda a, b, c, e=e: b == e) for e in dims.emotions}
    return plan


def _key_ints(role: str, key) -> list[int]:
    parts = key if isinstance(key, tuple) else (key,)
    digest = hashlib.sha256(repr((role, parts)).encode()).digest()
    return list(np.frombuffer(digest[:16], dtype=np.uint32))


def cell_config(base: TrainingConfig, role: str, key) -> TrainingConfig:
    """Per-model config whose seed is derived from the base seed and the model key."""
    seed = np.random.SeedSequence([base.rng_seed, *_key_ints(role, key)]).generate_state(1)[0]
    return TrainingConfig(base.max_iterations, base.rel_ll_tolerance, base.n_mixtures,
                          base.variance_floor_scale, int(seed))


def _train_acoustic(obs: list[np.ndarray], cfg: TrainingConfig) -> GmmHmm:
    model, _ = baum_welch(init_model(obs, ACOUSTIC_STATES, cfg), obs, cfg)
    return model


def train_registry(records: Sequence[UtteranceRecord], observations: Sequence[Observation],
                   dims: CorpusDims, config: RegistryConfig = RegistryConfig(), threads: int = 1,
                   progress: Callable[[str], None] | None = None) -> ModelRegistry:
    """Train every model of the hierarchy on ground-truth partitions of the training split.

    Speaker models (gender, emotion, speaker) and one-stage acoustic chains
    see the same utterances with the same seed, so one trained chain serves
    both roles.
    """
    if len(records) != len(observations):
        raise ValueError("records and observations must align")
    if not records:
        raise InsufficientData("empty training split")
    plan = training_plan(records, dims, config.ablations)
    ac = [o.acoustic for o in observations]

    def pairs(idx):
        return [(observations[i].acoustic, observations[i].prosodic) for i in idx]

    jobs: list[tuple[str, object, Callable[[], object]]] = []
    for g, idx in plan["gender"].items():
        jobs.append(("gender", g, lambda idx=idx, g=g: _train_acoustic(
            [ac[i] for i in idx], cell_config(config.acoustic, "gender", g))))
    for key, idx in plan["emotion"].items():
        jobs.append(("emotion", key, lambda idx=idx, key=key: train_sphmm(
            pairs(idx), cell_config(config.acoustic, "emotion", key),
            cell_config(config.prosodic, "emotion", key))))
    for key, idx in plan["one_stage"].items():
        jobs.append(("one_stage", key, lambda idx=idx, key=key: train_sphmm(
            pairs(idx), cell_config(config.acoustic, "one_stage", key),
            cell_config(config.prosodic, "one_stage", key))))
    for role in ("pooled_speaker", "pooled_emotion"):
        for key, idx in plan.get(role, {}).items():
            jobs.append((role, key, lambda idx=idx, key=key, role=role: train_sphmm(
                pairs(idx), cell_config(config.acoustic, role, key),
                cell_config(config.prosodic, role, key))))

    def run(job):
        role, key, fn = job
        model = fn()
        if progress:
            progress(f"trained {role} {key}")
        return role, key, model

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            done = list(pool.map(run, jobs))
    else:
        done = [run(j) for j in jobs]

    tables: dict[str, dict] = {role: {} for role in plan}
    for role, key, model in done:
        tables[role][key] = model
    tables["speaker"] = {(g, e, s): tables["one_stage"][(g, s, e)].acoustic
                         for (g, e, s) in plan["speaker"]}
    counts = {role: {_key_str(k): len(v) for k, v in plan[role].items()} for role in plan}
    return ModelRegistry(dims, tables["gender"], tables["emotion"], tables["speaker"], tables["one_stage"],
                         tables.get("pooled_speaker"), tables.get("pooled_emotion"), counts,
                         config.digest(dims))


# -- persistence -------------------------------------------------------


def _key_str(key) -> str:
    parts = key if isinstance(key, tuple) else (key,)
    return "-".join(str(p) for p in parts)


def _parse_key(role: str, text: str):
    parts = text.split("-")
    if role == "gender" or role == "pooled_emotion":
        return parts[0]
    if role == "emotion":
        return parts[0], parts[1]
    if role == "speaker":
        return parts[0], parts[1], int(parts[2])
    if role == "one_stage":
        return parts[0], int(parts[1]), parts[2]
    if role == "pooled_speaker":
        return parts[0], int(parts[1])
    raise ParseError(f"unknown role {role}")


def model_digest(model) -> str:
    arrays = model.to_arrays()
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()


def registry_hash(registry: ModelRegistry) -> str:
    h = hashlib.sha256(registry.config_hash.encode())
    for role in ROLES:
        for key, model in sorted((registry.models(role) or {}).items(), key=lambda kv: _key_str(kv[0])):
            h.update(f"{role}:{_key_str(key)}:{model_digest(model)}".encode())
    return h.hexdigest()


def save_registry(registry: ModelRegistry, directory: str | Path, corpus_hash: str = "") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for role in ROLES:
        table = registry.models(role)
        if table is None:
            continue
        (directory / role).mkdir(exist_ok=True)
        entries[role] = {}
        for key, model in table.items():
            rel = f"{role}/{_key_str(key)}.npz"
            np.savez(directory / rel, **model.to_arrays())
            entries[role][_key_str(key)] = {
                "file": rel, "kind": "sphmm" if isinstance(model, Sphmm) else "hmm"}
    manifest = {
        "format_version": REGISTRY_FORMAT,
        "dims": {"speakers_per_gender": registry.dims.speakers_per_gender,
                 "emotions": list(registry.dims.emotions),
                 "sentences": registry.dims.sentences,
                 "repetitions": registry.dims.repetitions},
        "config_hash": registry.config_hash,
        "corpus_hash": corpus_hash,
        "registry_hash": registry_hash(registry),
        "counts": registry.counts(),
        "training_counts": registry.training_counts,
        "models": entries,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_registry(directory: str | Path) -> ModelRegistry:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{directory}/manifest.json: {exc}") from exc
    if manifest.get("format_version") != REGISTRY_FORMAT:
        raise FormatVersionError(f"registry format {manifest.get('format_version')}, expected {REGISTRY_FORMAT}")
    d = manifest["dims"]
    dims = CorpusDims(d["speakers_per_gender"], tuple(d["emotions"]), d["sentences"], d["repetitions"])
    tables: dict[str, dict | None] = {role: None for role in ROLES}
    for role, entries in manifest["models"].items():
        tables[role] = {}
        for key_text, entry in entries.items():
            with np.load(directory / entry["file"]) as data:
                model = Sphmm.from_arrays(data) if entry["kind"] == "sphmm" else GmmHmm.from_arrays(data)
            tables[role][_parse_key(role, key_text)] = model
    return ModelRegistry(dims, tables["gender"], tables["emotion"], tables["speaker"], tables["one_stage"],
                         tables["pooled_speaker"], tables["pooled_emotion"],
                         manifest.get("training_counts", {}), manifest.get("config_hash", ""))
