import json
from pathlib import Path

import pytest

from leadtime.cli import main
from leadtime.config import load_experiment_config
from leadtime.errors import ConfigError


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(mini_corpus):
    """Train once per module through the real CLI."""
    assert run_cli("train", "--config", mini_corpus["config"]) == 0
    run_dir = mini_corpus["root"] / "run"
    ckpt = run_dir / "checkpoint.ilck"
    assert ckpt.exists()
    return {"ckpt": ckpt, "run": run_dir, **mini_corpus}


class TestSynthCommand:
    def test_synth_writes_manifest(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_dialogues": 1, "duration": 12.0}))
        assert run_cli("synth", "--spec", spec, "--out", tmp_path / "c",
                       "--seed", 5) == 0
        assert (tmp_path / "c" / "manifest.json").exists()
        assert "manifest" in capsys.readouterr().out

    def test_synth_deterministic(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_dialogues": 2, "duration": 10.0}))
        run_cli("synth", "--spec", spec, "--out", tmp_path / "c1", "--seed", 7)
        run_cli("synth", "--spec", spec, "--out", tmp_path / "c2", "--seed", 7)
        for name in ("d0000.wav", "d0001.wav", "d0000.a.jsonl"):
            assert (tmp_path / "c1" / name).read_bytes() == \
                   (tmp_path / "c2" / name).read_bytes()

    def test_bad_spec_errors(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_dialogues": 1, "duration": -3}))
        assert run_cli("synth", "--spec", spec, "--out", tmp_path / "c") == 1
        assert "error" in capsys.readouterr().err


class TestTrainCommand:
    def test_log_and_checkpoint(self, trained):
        log_lines = (trained["run"] / "train_log.jsonl").read_text().splitlines()
        entries = [json.loads(l) for l in log_lines]
        assert entries[-1].keys() == {"best_epoch"}
        assert all({"epoch", "train_loss", "val_nll", "val_mmae"} <=
                   set(e) for e in entries[:-1])

    def test_unknown_feature_letter_rejected(self, mini_corpus, capsys):
        doc = dict(mini_corpus["config_doc"])
        doc["model"] = dict(doc["model"], feature_set="RZ")
        bad = mini_corpus["root"] / "bad.json"
        bad.write_text(json.dumps(doc))
        assert run_cli("train", "--config", bad) == 1
        assert "unknown feature letter" in capsys.readouterr().err

    def test_missing_dumps_dir_for_w(self, mini_corpus, capsys):
        doc = dict(mini_corpus["config_doc"])
        doc["model"] = dict(doc["model"], feature_set="WR")
        bad = mini_corpus["root"] / "bad_w.json"
        bad.write_text(json.dumps(doc))
        assert run_cli("train", "--config", bad) == 1
        assert "dumps_dir" in capsys.readouterr().err

    def test_rerun_is_byte_identical(self, trained):
        ckpt_bytes = trained["ckpt"].read_bytes()
        log_bytes = (trained["run"] / "train_log.jsonl").read_bytes()
        assert run_cli("train", "--config", trained["config"]) == 0
        assert trained["ckpt"].read_bytes() == ckpt_bytes
        assert (trained["run"] / "train_log.jsonl").read_bytes() == log_bytes


class TestEvaluateCommand:
    def test_checkpoint_evaluation(self, trained, capsys):
        assert run_cli("evaluate", "--config", trained["config"],
                       "--checkpoint", trained["ckpt"], "--split", "test") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["mmae"] == pytest.approx(
            summary["mmae_true"] + summary["mmae_pred"])
        assert Path(summary["report"]).exists()

    def test_silence_baseline_two_buckets(self, trained, capsys):
        assert run_cli("evaluate", "--config", trained["config"],
                       "--silence-baseline", "--split", "test") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["mmae_pred_rule"] == "binary_substitute"
        import csv
        with open(summary["report"]) as fh:
            pred_rows = [r for r in csv.DictReader(fh)
                         if r["metric"] == "mae_pred"]
        assert sorted(float(r["bucket_value"]) for r in pred_rows) == [0.0, 2.0]

    def test_oracle_is_exact_zero(self, trained, capsys):
        assert run_cli("evaluate", "--config", trained["config"],
                       "--oracle", "--split", "test") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["mmae"] == 0.0

    def test_rerun_byte_identical(self, trained):
        run_cli("evaluate", "--config", trained["config"], "--checkpoint",
                trained["ckpt"], "--split", "test", "--out-prefix", "det")
        report = (trained["run"] / "det.report.csv").read_bytes()
        summary = (trained["run"] / "det.summary.json").read_bytes()
        run_cli("evaluate", "--config", trained["config"], "--checkpoint",
                trained["ckpt"], "--split", "test", "--out-prefix", "det")
        assert (trained["run"] / "det.report.csv").read_bytes() == report
        assert (trained["run"] / "det.summary.json").read_bytes() == summary

    def test_empty_split_errors(self, mini_corpus, capsys):
        doc = dict(mini_corpus["config_doc"])
        doc["splits"] = dict(doc["splits"], test=[])
        cfg = mini_corpus["root"] / "empty_split.json"
        cfg.write_text(json.dumps(doc))
        assert run_cli("evaluate", "--config", cfg, "--oracle",
                       "--split", "test") == 1
        assert "no segments" in capsys.readouterr().err

    def test_requires_exactly_one_predictor(self, trained, capsys):
        assert run_cli("evaluate", "--config", trained["config"]) == 1
        assert "exactly one" in capsys.readouterr().err

    def test_bootstrap_columns(self, trained):
        run_cli("evaluate", "--config", trained["config"], "--oracle",
                "--split", "test", "--out-prefix", "boot", "--bootstrap", "10")
        header = (trained["run"] / "boot.report.csv").read_text().splitlines()[0]
        assert header.endswith("mae_lo,mae_hi")


class TestCurvesCommand:
    def test_oracle_ideal_line(self, trained, capsys):
        run_cli("evaluate", "--config", trained["config"], "--oracle",
                "--split", "test", "--out-prefix", "oracle")
        capsys.readouterr()
        out_prefix = trained["run"] / "oracle_curves"
        assert run_cli("curves", "--report",
                       trained["run"] / "oracle.report.csv",
                       "--out-prefix", out_prefix) == 0
        import csv
        with open(f"{out_prefix}.pred_mean.csv") as fh:
            for row in csv.DictReader(fh):
                bucket = float(row["bucket_value"])
                assert float(row["mean_pred"]) == max(bucket, 0.0)

    def test_missing_report_errors(self, trained, capsys):
        assert run_cli("curves", "--report", trained["run"] / "nope.csv",
                       "--out-prefix", trained["run"] / "x") == 1
        assert "error" in capsys.readouterr().err


class TestConfigValidation:
    def test_missing_seed(self, mini_corpus):
        doc = dict(mini_corpus["config_doc"])
        del doc["seed"]
        path = mini_corpus["root"] / "noseed.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="seed"):
            load_experiment_config(path)

    def test_unknown_split_id(self, mini_corpus):
        doc = dict(mini_corpus["config_doc"])
        doc["splits"] = dict(doc["splits"], test=["zzz"])
        path = mini_corpus["root"] / "badid.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="unknown dialogue ids"):
            load_experiment_config(path)

    def test_missing_manifest(self, mini_corpus):
        doc = dict(mini_corpus["config_doc"], manifest="nowhere.json")
        path = mini_corpus["root"] / "noman.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="manifest"):
            load_experiment_config(path)

    def test_unknown_keys_rejected(self, mini_corpus):
        doc = dict(mini_corpus["config_doc"], what=1)
        path = mini_corpus["root"] / "unknown.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigError, match="unknown top-level"):
            load_experiment_config(path)
