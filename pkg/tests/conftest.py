import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from emosid.corpus import CorpusManifest  # noqa: E402
from emosid.hmm import TrainingConfig  # noqa: E402
from emosid.pipeline import observe_records  # noqa: E402
from emosid.registry import ModelRegistry, RegistryConfig, train_registry  # noqa: E402
from emosid.synth import SynthSpec, preset, synthesize_corpus  # noqa: E402

SEED = 0
FAST = RegistryConfig(TrainingConfig(max_iterations=3, n_mixtures=1),
                      TrainingConfig(max_iterations=3, n_mixtures=1, variance_floor_scale=1e-2))


@dataclass
class Trained:
    manifest: CorpusManifest
    registry: ModelRegistry
    test_records: list
    test_obs: list
    train_obs: list
    seconds: float


def build(spec: SynthSpec, root: Path, config: RegistryConfig = RegistryConfig()) -> Trained:
    start = time.perf_counter()
    manifest = synthesize_corpus(spec, root)
    train_obs = observe_records(manifest, manifest.train)
    registry = train_registry(manifest.train, train_obs, manifest.dims, config)
    test_obs = observe_records(manifest, manifest.test)
    return Trained(manifest, registry, manifest.test, test_obs, train_obs, time.perf_counter() - start)


@pytest.fixture(scope="session")
def separable(tmp_path_factory) -> Trained:
    """The separable preset with the default training configuration."""
    return build(preset("separable", SEED), tmp_path_factory.mktemp("separable"))


@pytest.fixture(scope="session")
def prosody_only(tmp_path_factory) -> Trained:
    return build(preset("prosody-only", SEED), tmp_path_factory.mktemp("prosody_only"))


@pytest.fixture(scope="session")
def tiny(tmp_path_factory) -> Trained:
    """Two speakers per gender, two emotions, quick training."""
    spec = SynthSpec(speakers_per_gender=2, emotions=("neutral", "anger"), sentences=2, repetitions=2,
                     separable=True)
    return build(spec, tmp_path_factory.mktemp("tiny"), FAST)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
