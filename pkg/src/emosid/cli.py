"""Command-line entry point: ``emosid {synth,train,identify,evaluate,sweep,ttest}``.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O or data error.
Progress goes to stderr; results go to stdout and report files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusManifest, ingest_wav, load_manifest
from .errors import (AblationModelsMissing, EmosidError, FormatVersionError, InvalidAlpha, MissingCell,
                     UnknownLabel)
from .evaluation import (ALPHA_GRID, alpha_sweep, confusion_csv, confusion_matrix, confusion_text, evaluate,
                         performance_csv, performance_table, performance_text, read_summary, report_name,
                         students_t, sweep_csv, sweep_text, ttest_csv, ttest_text)
from .pipeline import ABLATIONS, APPROACHES, identify, observe_records
from .registry import load_registry, observe, registry_hash, save_registry, train_registry
from .synth import PRESETS, plan_manifest, synthesize_corpus

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
CONFIG_ERRORS = (ConfigError, InvalidAlpha, MissingCell, UnknownLabel, AblationModelsMissing, FormatVersionError)

log = logging.getLogger("emosid")


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master random seed")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--corpus-dir", type=Path)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--registry-dir", type=Path)
    p.add_argument("--report-dir", type=Path)
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")


def _scoring(p: argparse.ArgumentParser, approach: bool = True) -> None:
    p.add_argument("--alpha", type=float, help="prosodic weight in [0, 1]")
    p.add_argument("--no-normalize", action="store_true", help="score without length normalization")
    if approach:
        p.add_argument("--approach", choices=APPROACHES)
        p.add_argument("--ablation", choices=ABLATIONS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emosid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic corpus and its manifest")
    _common(p)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--dry-run", action="store_true", help="count records without writing anything")

    p = sub.add_parser("train", help="train the model registry on the manifest's train split")
    _common(p)
    p.add_argument("--no-ablations", action="store_true", help="skip the pooled ablation models")

    p = sub.add_parser("identify", help="identify one WAV file")
    _common(p)
    _scoring(p)
    p.add_argument("wav", type=Path)

    p = sub.add_parser("evaluate", help="score the test split and write reports")
    _common(p)
    _scoring(p)
    p.add_argument("--worst-case", action="store_true", help="feed false gender and emotion forward")
    p.add_argument("--oracle", action="store_true", help="feed true gender and emotion forward")

    p = sub.add_parser("sweep", help="speaker accuracy over the alpha grid 0.0..1.0")
    _common(p)
    _scoring(p)

    p = sub.add_parser("ttest", help="two-sample t statistic from two reports or summary files")
    _common(p)
    p.add_argument("first", type=Path)
    p.add_argument("second", type=Path)
    p.add_argument("--method", choices=("welch", "pooled"), default="welch")
    p.add_argument("--reference-t", type=float, help="externally reported t to compare against")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Apply command-line flags over the config file over defaults."""
    cfg = load_config(args.config)
    paths = cfg.paths
    for flag in ("corpus_dir", "manifest", "registry_dir", "report_dir"):
        value = getattr(args, flag, None)
        if value is not None:
            paths = replace(paths, **{flag: value})
    updates = {"paths": paths}
    if args.seed is not None:
        updates["rng_seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if getattr(args, "alpha", None) is not None:
        updates["alpha"] = args.alpha
    if getattr(args, "no_normalize", False):
        updates["normalize"] = False
    if getattr(args, "approach", None) is not None:
        updates["approach"] = args.approach
    if getattr(args, "preset", None) is not None:
        updates["synth_preset"] = args.preset
    if getattr(args, "no_ablations", False):
        updates["ablations"] = False
    return replace(cfg, **updates)


def _manifest_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _load_corpus(cfg: RunConfig) -> CorpusManifest:
    path = cfg.paths.manifest_path
    if not path.is_file():
        raise CommandError(f"manifest not found: {path}", EXIT_IO)
    return load_manifest(path)


def _load_registry(cfg: RunConfig):
    if not (cfg.paths.registry_dir / "manifest.json").is_file():
        raise CommandError(f"no registry at {cfg.paths.registry_dir}", EXIT_IO)
    return load_registry(cfg.paths.registry_dir)


def _write(directory: Path, name: str, text: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(text, encoding="utf-8")
    return path


def cmd_synth(cfg: RunConfig, args) -> int:
    spec = cfg.synth_spec()
    if args.dry_run:
        manifest = plan_manifest(spec, cfg.paths.corpus_dir)
    else:
        log.info("rendering %d utterances into %s", spec.dims.expected_records, cfg.paths.corpus_dir)
        manifest = synthesize_corpus(spec, cfg.paths.corpus_dir, cfg.threads,
                                     cfg.paths.manifest_path.name)
    print(f"records {len(manifest)} train {len(manifest.train)} test {len(manifest.test)}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    manifest = _load_corpus(cfg)
    records = manifest.train
    log.info("extracting features for %d training utterances", len(records))
    observations = observe_records(manifest, records, cfg.threads)
    started = time.perf_counter()
    registry = train_registry(records, observations, manifest.dims, cfg.registry_config(), cfg.threads,
                              progress=log.debug)
    log.info("trained in %.1f s", time.perf_counter() - started)
    save_registry(registry, cfg.paths.registry_dir, _manifest_hash(cfg.paths.manifest_path))
    for role, count in registry.counts().items():
        sizes = sorted(set(registry.training_counts.get(role, {}).values()))
        print(f"{role} models {count} utterances per model {','.join(map(str, sizes))}")
    print(f"registry hash {registry_hash(registry)}")
    return EXIT_OK


def cmd_identify(cfg: RunConfig, args) -> int:
    registry = _load_registry(cfg)
    obs = observe(ingest_wav(args.wav))
    res = identify(registry, obs, cfg.approach, cfg.alpha, cfg.normalize, args.ablation)
    out = {
        "label": {"gender": res.label.gender, "emotion": res.label.emotion, "speaker_id": res.label.speaker_id},
        "approach": res.approach,
        "alpha": res.alpha,
        "scores": {stage: [[k if isinstance(k, (str, int)) else list(k), round(v, 6)] for k, v in items]
                   for stage, items in res.stage_scores.items()},
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _test_split(cfg: RunConfig, registry):
    manifest = _load_corpus(cfg)
    if manifest.dims.emotions != registry.emotions or \
            manifest.dims.speakers_per_gender != registry.dims.speakers_per_gender:
        raise CommandError("registry was trained on a corpus with different dimensions", EXIT_CONFIG)
    records = manifest.test
    log.info("extracting features for %d test utterances", len(records))
    return records, observe_records(manifest, records, cfg.threads)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    if args.worst_case and args.oracle:
        raise CommandError("--worst-case and --oracle are exclusive", EXIT_CONFIG)
    if (args.worst_case or args.oracle) and (args.ablation or cfg.approach != "three-stage"):
        raise CommandError("--worst-case and --oracle need the three-stage approach", EXIT_CONFIG)
    registry = _load_registry(cfg)
    records, observations = _test_split(cfg, registry)
    overrides = "worst" if args.worst_case else "oracle" if args.oracle else "none"
    results = evaluate(registry, records, observations, cfg.approach, cfg.alpha, cfg.normalize,
                       args.ablation, overrides, cfg.threads)
    tag = {"worst": "worst_case", "oracle": "oracle"}.get(overrides, args.ablation or cfg.approach)
    match = "speaker" if overrides == "none" else "index"
    table = performance_table(results, registry.emotions, match=match, tag=tag)
    report_dir = cfg.paths.report_dir
    written = [_write(report_dir, report_name("performance", tag, cfg.alpha), performance_csv(table))]
    text = [performance_text(table, f"speaker identification, {tag}, alpha {cfg.alpha:.2f}")]
    if overrides == "none" and not args.ablation and cfg.approach == "three-stage":
        for stage, classes in (("gender", registry.genders), ("emotion", registry.emotions)):
            for gender in (None, *registry.genders) if stage == "emotion" else (None,):
                cm = confusion_matrix(results, stage, classes, gender)
                label = f"{stage}{'_' + gender if gender else ''}"
                written.append(_write(report_dir, report_name(f"confusion_{label}", tag, cfg.alpha),
                                      confusion_csv(cm)))
                text.append(confusion_text(cm, f"{label} confusion (columns are true classes, %)"))
    body = "\n\n".join(text) + "\n"
    written.append(_write(report_dir, report_name("performance", tag, cfg.alpha)[:-4] + ".txt", body))
    print(body, end="")
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    if args.ablation:
        raise CommandError("sweeps run on the one-stage or three-stage approach", EXIT_CONFIG)
    registry = _load_registry(cfg)
    records, observations = _test_split(cfg, registry)
    sweep = alpha_sweep(registry, records, observations, ALPHA_GRID, cfg.approach, cfg.normalize, cfg.threads)
    path = _write(cfg.paths.report_dir, report_name("sweep", cfg.approach), sweep_csv(sweep))
    print(sweep_text(sweep))
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_ttest(cfg: RunConfig, args) -> int:
    for path in (args.first, args.second):
        if not path.is_file():
            raise CommandError(f"report not found: {path}", EXIT_IO)
    a, b = read_summary(args.first), read_summary(args.second)
    res = students_t(a.mean, a.sd, a.n, b.mean, b.sd, b.n, args.method, args.reference_t)
    path = _write(cfg.paths.report_dir, report_name("ttest", res.method), ttest_csv(res))
    print(ttest_text(res))
    log.info("wrote %s", path)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "identify": cmd_identify,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep, "ttest": cmd_ttest}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(message)s", force=True)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, EmosidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
