import json

import pytest

from emosid.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.yaml"
    cfg.write_text(
        f"paths: {{corpus_dir: {root / 'corpus'}, registry_dir: {root / 'registry'}, "
        f"report_dir: {root / 'reports'}}}\n"
        "acoustic: {max_iterations: 3, n_mixtures: 1}\n"
        "prosodic: {max_iterations: 3}\n"
        "synth: {preset: separable, speakers_per_gender: 2, emotions: [neutral, anger], sentences: 2, "
        "repetitions: 2}\n")
    assert main(["synth", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    return root, ["--config", str(cfg)]


class TestCommands:
    def test_synth_dry_run(self, capsys):
        assert main(["synth", "--preset", "csd-shape", "--dry-run"]) == 0
        assert capsys.readouterr().out.strip() == "records 21600 train 10800 test 10800"

    def test_train_output(self, workspace):
        root, _ = workspace
        assert (root / "registry" / "manifest.json").is_file()

    def test_identify_json(self, workspace, capsys):
        root, cfg = workspace
        wav = sorted((root / "corpus").rglob("*.wav"))[0]
        assert main(["identify", *cfg, str(wav)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["label"]["gender"] in ("M", "F")
        assert set(out["scores"]) == {"gender", "emotion", "speaker"}

    def test_evaluate_reports(self, workspace):
        root, cfg = workspace
        assert main(["evaluate", *cfg, "--alpha", "0.3"]) == 0
        reports = root / "reports"
        assert (reports / "performance_three-stage_alpha0.30.csv").is_file()
        assert (reports / "confusion_emotion_F_three-stage_alpha0.30.csv").is_file()
        assert (reports / "performance_three-stage_alpha0.30.txt").is_file()

    def test_worst_case_tag(self, workspace):
        root, cfg = workspace
        assert main(["evaluate", *cfg, "--worst-case"]) == 0
        assert (root / "reports" / "performance_worst_case_alpha0.50.csv").is_file()

    def test_ablation_report(self, workspace):
        root, cfg = workspace
        assert main(["evaluate", *cfg, "--ablation", "exp3"]) == 0
        assert (root / "reports" / "performance_exp3_alpha0.50.csv").is_file()

    def test_sweep_rows(self, workspace):
        root, cfg = workspace
        assert main(["sweep", *cfg]) == 0
        lines = (root / "reports" / "sweep_three-stage.csv").read_text().splitlines()
        assert len(lines) == 12 and lines[1].startswith("0.0,") and lines[-1].startswith("1.0,")

    def test_ttest(self, tmp_path, capsys):
        (tmp_path / "a.csv").write_text("mean,sd,n\n78.25,7.64,12\n")
        (tmp_path / "b.csv").write_text("mean,sd,n\n83.75,7.55,12\n")
        code = main(["ttest", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"), "--report-dir", str(tmp_path),
                     "--reference-t", "3.618"])
        assert code == 0
        assert "welch t = 1.774" in capsys.readouterr().out
        assert "t_value,1.7738" in (tmp_path / "ttest_welch.csv").read_text()


class TestExitCodes:
    def test_bad_alpha(self, workspace):
        assert main(["evaluate", *workspace[1], "--alpha", "1.5"]) == 2

    def test_exclusive_overrides(self, workspace):
        assert main(["evaluate", *workspace[1], "--worst-case", "--oracle"]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.yaml")]) == 2

    def test_missing_manifest(self, tmp_path):
        assert main(["train", "--corpus-dir", str(tmp_path)]) == 3

    def test_missing_registry(self, tmp_path):
        assert main(["evaluate", "--registry-dir", str(tmp_path)]) == 3

    def test_missing_wav(self, workspace, tmp_path):
        assert main(["identify", *workspace[1], str(tmp_path / "none.wav")]) == 3

    def test_missing_report(self, tmp_path):
        assert main(["ttest", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 3

    def test_ablations_not_trained(self, workspace, tmp_path):
        root, cfg = workspace
        reg = tmp_path / "reg"
        assert main(["train", *cfg, "--no-ablations", "--registry-dir", str(reg)]) == 0
        assert main(["evaluate", *cfg, "--registry-dir", str(reg), "--ablation", "exp1"]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
