"""Corpus manifests and WAV ingestion.

Manifest files are CSV with a header row. Optional leading ``#`` lines hold
``key=value`` metadata (corpus dimensions). Columns, in order::

    file_path, speaker_id, gender, emotion, sentence_id, repetition[, split]

``file_path`` is relative to the manifest's directory. The split column is
optional; it is always recomputed from ``sentence_id`` (the first half of
the sentences train, the second half test) and checked when present.
"""

from __future__ import annotations

import csv
import io
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InvariantViolation, ParseError, UnsupportedFormat
from .frontend import SAMPLE_RATE, AudioBuffer

EMOTIONS = ("neutral", "anger", "sadness", "happiness", "disgust", "fear")
GENDERS = ("M", "F")
COLUMNS = ("file_path", "speaker_id", "gender", "emotion", "sentence_id", "repetition", "split")
CSD_SHAPE = dict(speakers_per_gender=25, n_emotions=6, sentences=8, repetitions=9)
MANIFEST_TAG = "emosid-manifest v1"


def split_for(sentence_id: int, n_sentences: int) -> str:
    return "train" if sentence_id <= n_sentences // 2 else "test"


@dataclass(frozen=True)
class UtteranceRecord:
    file_path: str
    speaker_id: int
    gender: str
    emotion: str
    sentence_id: int
    repetition: int
    split: str

    @property
    def key(self) -> tuple[int, str, str, int, int]:
        return (self.speaker_id, self.gender, self.emotion, self.sentence_id, self.repetition)


@dataclass(frozen=True)
class CorpusDims:
    speakers_per_gender: int
    emotions: tuple[str, ...]
    sentences: int
    repetitions: int

    @property
    def n_emotions(self) -> int:
        return len(self.emotions)

    @property
    def expected_records(self) -> int:
        return 2 * self.speakers_per_gender * self.n_emotions * self.sentences * self.repetitions

    @property
    def is_csd_shaped(self) -> bool:
        return (self.speakers_per_gender, self.n_emotions, self.sentences, self.repetitions) == \
            tuple(CSD_SHAPE.values())


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[UtteranceRecord, ...]
    dims: CorpusDims
    root: Path = field(default=Path("."))
    csd_shaped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        self.validate()

    def __len__(self):
        return len(self.records)

    def validate(self, check_files: bool = False) -> None:
        seen = set()
        for rec in self.records:
            if rec.key in seen:
                raise InvariantViolation(f"duplicate record {rec.key}")
            seen.add(rec.key)
            if rec.gender not in GENDERS:
                raise InvariantViolation(f"unknown gender {rec.gender!r}")
            if rec.emotion not in self.dims.emotions:
                raise InvariantViolation(f"emotion {rec.emotion!r} outside {self.dims.emotions}")
            if not 1 <= rec.speaker_id <= self.dims.speakers_per_gender:
                raise InvariantViolation(f"speaker id {rec.speaker_id} out of range")
            if not 1 <= rec.sentence_id <= self.dims.sentences:
                raise InvariantViolation(f"sentence id {rec.sentence_id} out of range")
            if not 1 <= rec.repetition <= self.dims.repetitions:
                raise InvariantViolation(f"repetition {rec.repetition} out of range")
            expected = split_for(rec.sentence_id, self.dims.sentences)
            if rec.split != expected:
                raise InvariantViolation(
                    f"sentence {rec.sentence_id} belongs to {expected}, record says {rec.split}")
            if check_files and not (self.root / rec.file_path).is_file():
                raise InvariantViolation(f"missing audio file {rec.file_path}")
        if self.csd_shaped and len(self.records) != self.dims.expected_records:
            raise InvariantViolation(
                f"CSD-shaped manifest needs {self.dims.expected_records} records, has {len(self.records)}")

    def split(self, name: str) -> list[UtteranceRecord]:
        return [r for r in self.records if r.split == name]

    @property
    def train(self) -> list[UtteranceRecord]:
        return self.split("train")

    @property
    def test(self) -> list[UtteranceRecord]:
        return self.split("test")

    def path_of(self, record: UtteranceRecord) -> Path:
        return self.root / record.file_path


def _metadata_lines(dims: CorpusDims, csd_shaped: bool) -> list[str]:
    return [
        f"# {MANIFEST_TAG}",
        f"# speakers_per_gender={dims.speakers_per_gender}",
        f"# emotions={','.join(dims.emotions)}",
        f"# sentences={dims.sentences}",
        f"# repetitions={dims.repetitions}",
        f"# csd_shaped={'true' if csd_shaped else 'false'}",
    ]


def dump_manifest(manifest: CorpusManifest) -> str:
    buf = io.StringIO()
    buf.write("\n".join(_metadata_lines(manifest.dims, manifest.csd_shaped)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in manifest.records:
        writer.writerow([r.file_path, r.speaker_id, r.gender, r.emotion, r.sentence_id, r.repetition, r.split])
    return buf.getvalue()


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    Path(path).write_text(dump_manifest(manifest), encoding="utf-8")


def _infer_dims(rows: list[dict], meta: dict[str, str]) -> CorpusDims:
    def meta_int(key, fallback):
        try:
            return int(meta[key]) if key in meta else fallback
        except ValueError as exc:
            raise ParseError(f"bad metadata value for {key}: {meta[key]!r}") from exc

    if "emotions" in meta:
        emotions = tuple(e for e in meta["emotions"].split(",") if e)
    else:
        present = {r["emotion"] for r in rows}
        emotions = tuple(e for e in EMOTIONS if e in present) + tuple(sorted(present - set(EMOTIONS)))
    return CorpusDims(
        speakers_per_gender=meta_int("speakers_per_gender", max(r["speaker_id"] for r in rows)),
        emotions=emotions,
        sentences=meta_int("sentences", max(r["sentence_id"] for r in rows)),
        repetitions=meta_int("repetitions", max(r["repetition"] for r in rows)),
    )


def parse_manifest(text: str, root: Path = Path(".")) -> CorpusManifest:
    lines = text.splitlines()
    meta: dict[str, str] = {}
    body = []
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            for token in stripped[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    meta[k] = v
            continue
        body.append(line)
    if not body:
        raise ParseError("manifest is empty")
    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    if tuple(header[:6]) != COLUMNS[:6] or len(header) not in (6, 7) or (len(header) == 7 and header[6] != "split"):
        raise ParseError(f"unexpected manifest header {header}")
    rows = []
    for lineno, fields in enumerate(reader, start=2):
        if len(fields) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            row = dict(file_path=fields[0].strip(), speaker_id=int(fields[1]), gender=fields[2].strip(),
                       emotion=fields[3].strip(), sentence_id=int(fields[4]), repetition=int(fields[5]),
                       split=fields[6].strip() if len(fields) == 7 else None)
        except ValueError as exc:
            raise ParseError(f"row {lineno}: {exc}") from exc
        rows.append(row)
    if not rows:
        raise ParseError("manifest has a header but no records")
    dims = _infer_dims(rows, meta)
    records = []
    for row in rows:
        computed = split_for(row["sentence_id"], dims.sentences)
        if row["split"] not in (None, "", computed):
            raise InvariantViolation(
                f"{row['file_path']}: sentence {row['sentence_id']} belongs to {computed}, "
                f"manifest says {row['split']}")
        row["split"] = computed
        records.append(UtteranceRecord(**row))
    return CorpusManifest(tuple(records), dims, root, meta.get("csd_shaped", "false") == "true")


def load_manifest(path: str | Path, check_files: bool = True) -> CorpusManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text manifest") from exc
    manifest = parse_manifest(text, path.parent)
    if check_files:
        manifest.validate(check_files=True)
    return manifest


def build_manifest(records: Iterable[UtteranceRecord], dims: CorpusDims, root: Path = Path("."),
                   csd_shaped: bool = False) -> CorpusManifest:
    return CorpusManifest(tuple(records), dims, root, csd_shaped)


# -- audio files -------------------------------------------------------


def ingest_wav(path: str | Path) -> AudioBuffer:
    """Decode a 16-bit mono 16 kHz PCM WAV file to floats in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels, width, rate = wf.getnchannels(), wf.getsampwidth(), wf.getframerate()
            if wf.getcomptype() != "NONE":
                raise UnsupportedFormat(f"{path}: compressed WAV ({wf.getcomptype()})")
            if channels != 1:
                raise UnsupportedFormat(f"{path}: {channels} channels, need mono")
            if width != 2:
                raise UnsupportedFormat(f"{path}: {8 * width}-bit samples, need 16-bit")
            if rate != SAMPLE_RATE:
                raise UnsupportedFormat(f"{path}: {rate} Hz, need {SAMPLE_RATE} Hz (no resampling)")
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        raise ParseError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise ParseError(f"{path}: truncated WAV file") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, SAMPLE_RATE)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.round(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())
