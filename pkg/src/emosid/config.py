"""Run configuration: one YAML file, overridable from the command line.

Precedence is command-line flag, then config file, then built-in default.
Example file::

    paths:
      corpus_dir: corpus
      registry_dir: registry
      report_dir: reports
    alpha: 0.5
    normalize: true
    rng_seed: 0
    acoustic: {n_mixtures: 3, max_iterations: 50}
    prosodic: {n_mixtures: 1, variance_floor_scale: 0.01}
    synth: {preset: desk}
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import EmosidError
from .hmm import TrainingConfig
from .registry import RegistryConfig
from .sphmm import check_alpha
from .synth import PRESETS, SynthSpec, preset


class ConfigError(EmosidError, ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class Paths:
    corpus_dir: Path = Path("corpus")
    manifest: Path | None = None
    registry_dir: Path = Path("registry")
    report_dir: Path = Path("reports")

    @property
    def manifest_path(self) -> Path:
        return self.manifest if self.manifest is not None else self.corpus_dir / "manifest.csv"


@dataclass(frozen=True)
class RunConfig:
    paths: Paths = Paths()
    alpha: float = 0.5
    normalize: bool = True
    approach: str = "three-stage"
    ablations: bool = True
    rng_seed: int = 0
    threads: int = 1
    acoustic: TrainingConfig = RegistryConfig().acoustic
    prosodic: TrainingConfig = RegistryConfig().prosodic
    synth_preset: str = "desk"
    synth_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            check_alpha(self.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.approach not in ("three-stage", "one-stage"):
            raise ConfigError(f"unknown approach {self.approach!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.synth_preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.synth_preset!r}; choose from {', '.join(PRESETS)}")

    def registry_config(self) -> RegistryConfig:
        return RegistryConfig(replace(self.acoustic, rng_seed=self.rng_seed),
                              replace(self.prosodic, rng_seed=self.rng_seed), self.ablations)

    def synth_spec(self) -> SynthSpec:
        try:
            spec = preset(self.synth_preset, self.rng_seed)
            return replace(spec, **self.synth_overrides) if self.synth_overrides else spec
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth settings: {exc}") from exc


def _training(base: TrainingConfig, data: Any, name: str) -> TrainingConfig:
    if data is None:
        return base
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = {f.name for f in fields(TrainingConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    try:
        return TrainingConfig(**{**asdict(base), **data})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} settings: {exc}") from exc


def config_from_dict(data: dict, base: RunConfig = RunConfig()) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping at top level")
    known = {"paths", "alpha", "normalize", "approach", "ablations", "rng_seed", "threads",
             "acoustic", "prosodic", "synth"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    paths = base.paths
    if "paths" in data:
        p = data["paths"] or {}
        bad = set(p) - {f.name for f in fields(Paths)}
        if bad:
            raise ConfigError(f"unknown path keys: {sorted(bad)}")
        paths = replace(paths, **{k: Path(v) if v is not None else None for k, v in p.items()})
    synth = dict(data.get("synth") or {})
    preset_name = synth.pop("preset", base.synth_preset)
    try:
        return replace(
            base, paths=paths,
            alpha=float(data.get("alpha", base.alpha)),
            normalize=bool(data.get("normalize", base.normalize)),
            approach=str(data.get("approach", base.approach)),
            ablations=bool(data.get("ablations", base.ablations)),
            rng_seed=int(data.get("rng_seed", base.rng_seed)),
            threads=int(data.get("threads", base.threads)),
            acoustic=_training(base.acoustic, data.get("acoustic"), "acoustic"),
            prosodic=_training(base.prosodic, data.get("prosodic"), "prosodic"),
            synth_preset=preset_name,
            synth_overrides={**base.synth_overrides, **synth},
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data or {})
