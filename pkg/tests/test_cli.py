"""Exit codes, config overlay, and round trips through the command line."""

import json
import os

import numpy as np
import pytest

from qsumm.cli import run_cli

MINI = {
    "synth": {
        "n_videos": 3,
        "n_shots": 12,
        "n_concepts": 6,
        "d_frame": 8,
        "d_shot": 10,
        "d_text": 6,
    },
    "train": {
        "max_steps": 3,
        "n_critic": 2,
        "segment_len": 8,
        "lr_gen": 1e-3,
        "lr_critic": 1e-3,
    },
}


def write_config(tmp_path, cfg=MINI):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def dir_bytes(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as fh:
            out[name] = fh.read()
    return out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One corpus plus one trained run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root)
    corpus = str(root / "corpus")
    run = str(root / "run")
    assert run_cli(["synth", "--out", corpus, "--seed", "11", "--config", cfg]) == 0
    assert run_cli(["train", "--corpus", corpus, "--out", run, "--config", cfg]) == 0
    return {
        "cfg": cfg,
        "corpus": corpus,
        "run": run,
        "checkpoint": os.path.join(run, "checkpoint.qsck"),
    }


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert run_cli(["--help"]) == 0
        assert "synth" in capsys.readouterr().out

    def test_subcommand_help_exits_zero(self, capsys):
        assert run_cli(["train", "--help"]) == 0
        assert "--ablation" in capsys.readouterr().out

    def test_no_command_is_usage_error(self, capsys):
        assert run_cli([]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_command_is_usage_error(self, capsys):
        assert run_cli(["frobnicate"]) == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert run_cli(["evaluate", "--corpus", "x"]) == 1
        assert "--checkpoint" in capsys.readouterr().err

    def test_bad_flag_value_is_usage_error(self):
        assert run_cli(["evaluate", "--corpus", "x", "--checkpoint", "y",
                        "--split", "nope"]) == 1

    def test_missing_corpus_file_is_runtime_error(self, capsys):
        assert run_cli(["train", "--corpus", "/nonexistent", "--out", "/tmp/x"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_length_study_requires_out(self, workspace, capsys):
        rc = run_cli(["evaluate", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"], "--length-study"])
        assert rc == 1
        assert "--length-study requires --out" in capsys.readouterr().err


class TestConfigFile:
    def test_unknown_section_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"synt": {}})
        assert run_cli(["synth", "--out", str(tmp_path / "c"), "--config", cfg]) == 2
        assert "unknown config sections" in capsys.readouterr().err

    def test_unknown_field_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"synth": {"n_video": 3}})
        assert run_cli(["synth", "--out", str(tmp_path / "c"), "--config", cfg]) == 2
        assert "n_video" in capsys.readouterr().err

    def test_malformed_json_rejected(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        assert run_cli(["synth", "--out", str(tmp_path / "c"),
                        "--config", str(path)]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_non_object_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2]")
        assert run_cli(["synth", "--out", str(tmp_path / "c"),
                        "--config", str(path)]) == 2

    def test_file_values_override_defaults(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "c"
        assert run_cli(["synth", "--out", str(out), "--config", cfg]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["videos"]) == MINI["synth"]["n_videos"]
        assert manifest["dims"]["d_frame"] == MINI["synth"]["d_frame"]

    def test_flag_overrides_file_seed(self, tmp_path, workspace):
        """--seed on train beats whatever the config file says."""
        cfg = write_config(
            tmp_path, {"train": dict(MINI["train"], seed=3, max_steps=2)}
        )
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        argv = ["train", "--corpus", workspace["corpus"], "--config", cfg]
        assert run_cli(argv + ["--out", str(out_a)]) == 0
        assert run_cli(argv + ["--out", str(out_b), "--seed", "3"]) == 0
        a = (out_a / "metrics.csv").read_bytes()
        assert a == (out_b / "metrics.csv").read_bytes()
        out_c = tmp_path / "c"
        assert run_cli(argv + ["--out", str(out_c), "--seed", "4"]) == 0
        assert a != (out_c / "metrics.csv").read_bytes()


class TestSynth:
    def test_same_seed_same_bytes(self, tmp_path):
        cfg = write_config(tmp_path)
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert run_cli(["synth", "--out", str(a), "--seed", "7", "--config", cfg]) == 0
        assert run_cli(["synth", "--out", str(b), "--seed", "7", "--config", cfg]) == 0
        assert dir_bytes(a) == dir_bytes(b)

    def test_different_seed_different_features(self, tmp_path):
        cfg = write_config(tmp_path)
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert run_cli(["synth", "--out", str(a), "--seed", "7", "--config", cfg]) == 0
        assert run_cli(["synth", "--out", str(b), "--seed", "8", "--config", cfg]) == 0
        assert dir_bytes(a) != dir_bytes(b)


class TestTrainEvaluateSummarize:
    def test_train_writes_metrics_and_checkpoint(self, workspace):
        run = workspace["run"]
        assert os.path.exists(os.path.join(run, "metrics.csv"))
        assert os.path.exists(workspace["checkpoint"])
        with open(os.path.join(run, "metrics.csv")) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "step,critic_loss,gen_adv,loss_summ,loss_length,total_gen"
        assert len(lines) == 1 + MINI["train"]["max_steps"]

    def test_train_accepts_corpus_directory_or_manifest(self, workspace, tmp_path):
        manifest = os.path.join(workspace["corpus"], "manifest.json")
        out = tmp_path / "run"
        rc = run_cli(["train", "--corpus", manifest, "--out", str(out),
                      "--config", workspace["cfg"]])
        assert rc == 0
        assert (out / "metrics.csv").read_bytes() == open(
            os.path.join(workspace["run"], "metrics.csv"), "rb"
        ).read()

    def test_ablation_flags_change_the_run(self, workspace, tmp_path):
        outs = {}
        for name in ("none", "two-player", "no-length", "no-summ"):
            out = tmp_path / name
            rc = run_cli(["train", "--corpus", workspace["corpus"], "--out", str(out),
                          "--config", workspace["cfg"], "--ablation", name])
            assert rc == 0
            outs[name] = (out / "metrics.csv").read_text()
        assert len(set(outs.values())) == 4
        for line in outs["no-summ"].splitlines()[1:]:
            assert line.split(",")[3] == "0.0"
        for line in outs["no-length"].splitlines()[1:]:
            assert line.split(",")[4] == "0.0"

    def test_resume_from_checkpoint_flag(self, workspace, tmp_path):
        cfg = write_config(tmp_path, {"train": dict(MINI["train"], max_steps=2)})
        out = tmp_path / "run"
        argv = ["train", "--corpus", workspace["corpus"], "--out", str(out)]
        assert run_cli(argv + ["--config", cfg]) == 0
        cfg_full = write_config(tmp_path, MINI)
        rc = run_cli(argv + ["--config", cfg_full,
                             "--checkpoint", str(out / "checkpoint.qsck")])
        assert rc == 0
        resumed = (out / "metrics.csv").read_text()
        assert len(resumed.splitlines()) == 1 + MINI["train"]["max_steps"]
        straight = open(os.path.join(workspace["run"], "metrics.csv")).read()
        assert resumed == straight

    def test_evaluate_writes_reports(self, workspace, tmp_path, capsys):
        out = tmp_path / "rep"
        rc = run_cli(["evaluate", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"],
                      "--split", "test", "--out", str(out), "--length-study"])
        assert rc == 0
        assert sorted(os.listdir(out)) == [
            "length_study.csv", "report.csv", "report.json"
        ]
        console = capsys.readouterr().out
        assert "split=test" in console
        report = json.loads((out / "report.json").read_text())
        assert f"f1={report['f1']:.4f}" in console
        study = (out / "length_study.csv").read_text().splitlines()
        assert study[0] == "metric,value"

    def test_evaluate_without_out_prints_only(self, workspace, capsys):
        rc = run_cli(["evaluate", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"]])
        assert rc == 0
        assert "f1=" in capsys.readouterr().out

    def test_summarize_to_stdout(self, workspace, capsys):
        rc = run_cli(["summarize", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"],
                      "--video", "v000", "--query", "0"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "shot,score,gate,selected"
        assert len(lines) == 1 + MINI["synth"]["n_shots"]

    def test_summarize_csv_is_consistent(self, workspace, tmp_path):
        path = tmp_path / "s.csv"
        rc = run_cli(["summarize", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"],
                      "--video", "v001", "--query", "1", "--threshold", "0.5",
                      "--out", str(path)])
        assert rc == 0
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        assert [int(r[0]) for r in rows] == list(range(MINI["synth"]["n_shots"]))
        for _, score, gate, selected in rows:
            s, k = float(score), float(gate)
            assert 0.0 < s < 1.0 and 0.0 < k < 1.0
            assert int(selected) == int(s > 0.5)

    def test_summarize_unknown_video_is_runtime_error(self, workspace, capsys):
        rc = run_cli(["summarize", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"],
                      "--video", "v999", "--query", "0"])
        assert rc == 2
        assert "v999" in capsys.readouterr().err

    def test_summarize_query_out_of_range(self, workspace, capsys):
        rc = run_cli(["summarize", "--corpus", workspace["corpus"],
                      "--checkpoint", workspace["checkpoint"],
                      "--video", "v000", "--query", "99"])
        assert rc == 2
        assert "out of range" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_reports_pass_per_component(self, monkeypatch, capsys):
        monkeypatch.setattr(
            "qsumm.cli.component_suite",
            lambda seed=0: {"linear": 1e-9, "sigmoid": 2e-8},
        )
        assert run_cli(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "linear" in out and "ok" in out and "all 2 components" in out

    def test_failing_component_exits_two(self, monkeypatch, capsys):
        monkeypatch.setattr(
            "qsumm.cli.component_suite",
            lambda seed=0: {"linear": 1e-9, "bilstm": 0.5},
        )
        assert run_cli(["gradcheck"]) == 2
        captured = capsys.readouterr()
        assert "FAIL" in captured.out
        assert "bilstm" in captured.err

    def test_single_component_runs_clean(self):
        """The full suite is exercised by the acceptance tests; one cheap
        seeded instance here keeps the wiring honest."""
        from conftest import check_grads
        from qsumm.tensor import as_tensor, mean_all, sigmoid

        rng = np.random.default_rng(0)
        x = as_tensor(rng.standard_normal((3, 4)))
        check_grads(lambda: mean_all(sigmoid(x)), {"x": x})
