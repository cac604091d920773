import json
from pathlib import Path
from unittest.mock import patch

import pytest

from app.cli import pretrain as pretrain_command
from app.cli.common import load_context
from app.core.config import get_settings, load_experiment_config
from app.core.errors import ConfigurationError
from app.core.runs import MANIFEST
from app.main import main
from app.models.domain import EvalReport, RunManifest

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached per process; tests that touch the environment need a clean cache."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


class TestConfig:
    """Test suite for config loading and validation."""

    @pytest.mark.parametrize("name", ["desk.toml", "smoke.toml"])
    def test_shipped_configs_parse(self, name):
        config = load_experiment_config(CONFIGS / name)
        assert config.data.pivot in [lang.name for lang in config.data.languages]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="nope.toml"):
            load_experiment_config(tmp_path / "nope.toml")

    def test_typo_suggests_key(self, tmp_path):
        path = tmp_path / "typo.toml"
        path.write_text("[hypernet]\nbottlneck = 3\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="did you mean 'bottleneck'"):
            load_experiment_config(path)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[regime]\nsteps = 0\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="regime.steps"):
            load_experiment_config(path)

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[regime\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="cannot parse"):
            load_experiment_config(path)

    def test_seed_override(self, config_file, monkeypatch):
        monkeypatch.setenv("HYPERX_SEED", "99")
        assert load_context(config_file).config.seed == 99

    def test_manifest_echo_is_a_config(self, tmp_path, tiny_config):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"name": "x", "config": tiny_config.model_dump(mode="json")}), encoding="utf-8")
        assert load_experiment_config(path) == tiny_config


class TestUsageErrors:
    """Test suite for exit codes of rejected invocations."""

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["pretrain", str(tmp_path / "absent.toml")]) == 2
        assert "absent.toml" in capsys.readouterr().err

    def test_madx_outside_single_task(self, config_file):
        assert main(["train", str(config_file), "--regime", "multi_task", "--system", "madx"]) == 2

    def test_partition_outside_mixed_language(self, config_file, capsys):
        assert main(["train", str(config_file), "--regime", "multi_task", "--partition", "A"]) == 2
        assert "--partition" in capsys.readouterr().err

    def test_single_task_needs_a_task(self, config_file):
        assert main(["train", str(config_file), "--regime", "single_task"]) == 2

    def test_unknown_regime_is_an_argparse_error(self, config_file):
        with pytest.raises(SystemExit) as exc:
            main(["train", str(config_file), "--regime", "everything"])
        assert exc.value.code == 2

    def test_train_without_backbone(self, config_file, capsys):
        assert main(["train", str(config_file), "--regime", "multi_task"]) == 2
        assert "no backbone checkpoint" in capsys.readouterr().err

    def test_unexpected_exception_exits_3(self, config_file, capsys):
        with patch.object(pretrain_command, "run", side_effect=OSError("disk full")):
            assert main(["pretrain", str(config_file)]) == 3
        assert "OSError: disk full" in capsys.readouterr().err

    def test_sweep_refuses_pinned_seed(self, config_file, monkeypatch):
        monkeypatch.setenv("HYPERX_SEED", "4")
        assert main(["sweep", str(config_file), "--seeds", "1", "2"]) == 2

    def test_sweep_refuses_repeated_seeds(self, config_file):
        assert main(["sweep", str(config_file), "--seeds", "1", "1"]) == 2


class TestPipeline:
    """Test suite for the pretrain, train, eval, fewshot and report commands end to end."""

    @pytest.fixture
    def outputs(self, tiny_config):
        return Path(tiny_config.output.root)

    @pytest.fixture
    def pretrained(self, config_file, outputs, monkeypatch):
        monkeypatch.setenv("HYPERX_CHECK_INVARIANTS", "true")
        assert main(["pretrain", str(config_file)]) == 0
        return config_file

    def test_pretrain_is_write_once(self, pretrained, outputs, capsys):
        assert (outputs / "backbone" / "experiment.json").exists()
        assert main(["pretrain", str(pretrained)]) == 2
        assert "already exists" in capsys.readouterr().err

    def test_train_evaluate_and_report(self, pretrained, outputs):
        cfg = str(pretrained)
        assert main(["train", cfg, "--regime", "multi_task"]) == 0
        assert main(["train", cfg, "--regime", "multi_task", "--system", "full_finetune"]) == 0
        hyperx = outputs / "runs" / "hyperx-multi_task"
        baseline = outputs / "runs" / "full_finetune-multi_task"
        manifest = RunManifest.model_validate_json((hyperx / MANIFEST).read_text())
        assert manifest.best_checkpoint is not None
        assert manifest.invocation["args"]["regime"] == "multi_task"
        assert manifest.census.frozen["backbone"] > 0

        assert main(["train", cfg, "--regime", "multi_task"]) == 2

        assert main(["eval", str(hyperx), str(baseline), "--name", "grid"]) == 0
        grid = outputs / "reports" / "grid"
        report = EvalReport.model_validate_json((grid / "report_hyperx.json").read_text())
        assert len(report.scores) == 2 * 4
        assert (grid / "table.txt").exists()

        assert main(["report", str(grid), "--baseline", "full_finetune", "--root", str(outputs)]) == 0
        comparison = outputs / "reports" / "comparison"
        assert (comparison / "error_reduction.csv").exists()
        assert main(["report", str(grid), "--baseline", "full_finetune:multi_task", "--root", str(outputs),
                     "--name", "by-label"]) == 0
        assert "vs full_finetune:multi_task" in (outputs / "reports" / "by-label" / "table.txt").read_text()
        assert main(["report", str(grid), "--baseline", "madx", "--root", str(outputs), "--name", "other"]) == 2

    def test_mixed_language_and_madx(self, pretrained, outputs):
        cfg = str(pretrained)
        assert main(["train", cfg, "--regime", "mixed_language", "--partition", "B"]) == 0
        manifest = json.loads((outputs / "runs" / "hyperx-mixed_language-B" / MANIFEST).read_text())
        assert manifest["regime"]["partition"] == "B"

        assert main(["train", cfg, "--regime", "single_task", "--task", "ner", "--system", "madx"]) == 0
        madx = json.loads((outputs / "runs" / "madx-single_task-ner" / MANIFEST).read_text())
        assert madx["census"]["trainable"]["language_adapters"] > 0

    def test_fewshot_sweep(self, pretrained, outputs, capsys):
        cfg = str(pretrained)
        assert main(["train", cfg, "--regime", "multi_task", "--name", "base"]) == 0
        run = outputs / "runs" / "base"
        assert main(["fewshot", str(run), "--k", "0", "2"]) == 0
        manifests = sorted((outputs / "runs").glob("fewshot-base-*/" + MANIFEST))
        # pos and ner on the one unseen language, two k values each
        assert len(manifests) == 4
        zero = json.loads((outputs / "runs" / "fewshot-base-pos-l3-k0" / MANIFEST).read_text())
        assert zero["extra"]["score"] == zero["extra"]["zero_shot_score"]
        assert zero["extra"]["source_run"] == str(run)

        assert main(["fewshot", str(run), "--new-labels", "--name", "labels"]) == 0
        labels = json.loads((outputs / "runs" / "labels-ner-l3-k1" / MANIFEST).read_text())
        assert labels["extra"]["mode"] == "new_label_set"

        assert main(["fewshot", str(run), "--k", "-1", "--name", "neg"]) == 2
        assert main(["fewshot", str(run), "--workers", "0", "--name", "w"]) == 2

    def test_fewshot_rejects_unknown_pairs_before_writing(self, pretrained, outputs, capsys):
        cfg = str(pretrained)
        assert main(["train", cfg, "--regime", "multi_task", "--name", "base"]) == 0
        run = str(outputs / "runs" / "base")
        assert main(["fewshot", run, "--pairs", "pos/l3", "pos/zz", "--name", "p"]) == 2
        assert "zz" in capsys.readouterr().err
        assert main(["fewshot", run, "--pairs", "srl/l3", "--name", "p"]) == 2
        assert not list((outputs / "runs").glob("p-*"))

    def test_export(self, pretrained, outputs, capsys):
        cfg = str(pretrained)
        assert main(["train", cfg, "--regime", "multi_task"]) == 0
        run = outputs / "runs" / "hyperx-multi_task"
        assert main(["export", str(run), "--pairs", "pos/l3", "ner/en", "--embeddings"]) == 0
        exported = outputs / "exports" / "export-hyperx-multi_task"
        assert list((exported / "adapters" / "pos-l3").glob("*.hxt"))
        assert (exported / "language_embeddings.csv").exists()
        assert (exported / "task_embeddings.csv").exists()
        record = json.loads((exported / "export.json").read_text())
        assert set(record["adapters"]) == {"pos/l3", "ner/en"}
        assert record["source_run"] == str(run)

        assert main(["export", str(run), "--pairs", "pos/zz", "--name", "bad"]) == 2
        assert not (outputs / "exports" / "bad").exists()

        assert main(["train", cfg, "--regime", "multi_task", "--system", "full_finetune"]) == 0
        capsys.readouterr()
        assert main(["export", str(outputs / "runs" / "full_finetune-multi_task")]) == 2
        assert "no adapters" in capsys.readouterr().err

    def test_pretrain_writes_corpus(self, config_file, outputs, tiny_config):
        assert main(["pretrain", str(config_file), "--write-corpus"]) == 0
        corpus = outputs / "corpus"
        for language in ("en", "l1", "l2", "l3"):
            for split in ("train", "dev", "test"):
                assert (corpus / f"{language}.{split}.conll").exists()
        manifest = json.loads((corpus / "l3.dev.conll.manifest.json").read_text())
        assert manifest["sentences"] == tiny_config.data.dev_sentences


class TestSweep:
    """Test suite for the multi-seed acceptance sweep."""

    def test_two_seed_sweep(self, config_file, tiny_config, capsys):
        assert main(["sweep", str(config_file), "--seeds", "1", "2", "--k", "0", "1", "--name", "tiny"]) == 0
        root = Path(tiny_config.output.root) / "sweeps" / "tiny"
        result = json.loads((root / "acceptance.json").read_text())
        assert result["summary"]["seeds"] == [1, 2]
        assert {c["name"] for c in result["summary"]["criteria"]} >= {"mixed_beats_full_finetune", "fewshot_non_decreasing"}
        first = result["outcomes"][0]
        assert first["seed"] == 1
        assert set(first["aggregates"]) == {
            "hyperx:mixed_language", "hyperx:multi_task", "full_finetune:single_task", "madx:single_task",
        }
        curves = first["fewshot"]["hyperx:mixed_language"]
        assert set(curves) == set(first["fewshot"]["hyperx:multi_task"])
        assert curves and all(set(curve) == {"0", "1"} for curve in curves.values())
        assert (root / "seed-2" / "backbone" / "manifest.json").exists()
        assert (root / "aggregates.csv").exists()
        assert "mixed_beats_madx" in capsys.readouterr().out
