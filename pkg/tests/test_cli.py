"""CLI: config validation, pipeline runs, echo reproduction, exit codes."""

import numpy as np
import pytest
import yaml

from spnet.cli import main
from spnet.config import build_config, load_config
from spnet.errors import ConfigError

BASE_CONFIG = {
    "seed": 7,
    "dataset": {
        "kind": "segments",
        "n_per_class": 40,
        "margin": 1.8,
        "noise": 0.05,
        "test_fraction": 0.2,
    },
    "model": {"hidden": [8], "activation": "tanh"},
    "loss": {"kind": "sp_focal", "alpha": 0.25, "gamma": 2.0, "eta": 0.03},
    "train": {
        "optimizer": "adam",
        "learning_rate": 0.01,
        "epochs": 60,
        "batch_size": 32,
        "record_trace": True,
    },
    "attacks": {
        "items": [
            {"kind": "fgsm", "epsilon": 0.1},
            {"kind": "pgd", "epsilon": 0.2, "step_size": 0.05, "steps": 5,
             "random_start": True},
        ]
    },
    "sweep": {"kind": "pgd", "epsilons": [0.0, 0.1], "step_size": 0.05, "steps": 5},
    "analysis": {
        "boundary": True,
        "resolution": 60,
        "confidence_threshold": 0.9,
        "landscape": True,
        "landscape_span": 0.5,
        "landscape_resolution": 5,
        "landscape_seeds": [1, 2],
    },
}


def write_config(tmp_path, overrides=None, name="config.yaml"):
    cfg = yaml.safe_load(yaml.safe_dump(BASE_CONFIG))
    if overrides:
        for dotted, value in overrides.items():
            node = cfg
            *heads, last = dotted.split(".")
            for h in heads:
                node = node.setdefault(h, {})
            node[last] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestConfigValidation:
    def test_valid_config_loads(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.seed == 7
        assert cfg.loss.kind == "sp_focal"
        assert len(cfg.attacks) == 2

    def test_seed_mandatory(self):
        raw = yaml.safe_load(yaml.safe_dump(BASE_CONFIG))
        del raw["seed"]
        with pytest.raises(ConfigError, match="seed"):
            build_config(raw)

    def test_seed_override(self, tmp_path):
        cfg = load_config(write_config(tmp_path), seed_override=99)
        assert cfg.seed == 99

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, {"train.warmup": 5})
        with pytest.raises(ConfigError, match="warmup"):
            load_config(path)

    def test_sp_ce_variant_must_be_explicit(self, tmp_path):
        path = write_config(tmp_path, {"loss": {"kind": "sp_ce", "eta": 1.0}})
        with pytest.raises(ConfigError, match="variant"):
            load_config(path)

    def test_missing_idx_file_rejected(self, tmp_path):
        path = write_config(
            tmp_path,
            {"dataset": {"kind": "idx", "images": "/nonexistent/i.idx",
                         "labels": "/nonexistent/l.idx"}},
        )
        with pytest.raises(ConfigError, match="not found"):
            load_config(path)

    def test_cli_exit_code_on_config_error(self, tmp_path, capsys):
        path = write_config(tmp_path, {"train.optimizer": "adagrad"})
        code = main(["train", "--config", str(path), "--out", str(tmp_path / "run")])
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_cli_exit_code_on_runtime_error(self, tmp_path, capsys):
        path = write_config(tmp_path)
        code = main(["attack", "--config", str(path), "--out", str(tmp_path / "nope")])
        assert code == 1  # missing checkpoint is caught before running


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipeline")
    cfg = write_config(tmp)
    out = tmp / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["attack", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    return tmp, cfg, out


class TestPipeline:
    def test_artifacts_exist(self, run_dir):
        _, _, out = run_dir
        for name in (
            "config_echo.yaml", "best.ckpt", "final.ckpt", "summary.txt",
            "trace.csv", "attack_fgsm.csv", "attack_pgd.csv", "boundary.csv",
            "boundary_report.txt", "landscape.csv", "sweep_pgd.csv",
        ):
            assert (out / name).exists(), name

    def test_summary_contents(self, run_dir):
        _, _, out = run_dir
        summary = dict(
            line.partition("=")[::2]
            for line in (out / "summary.txt").read_text().splitlines()
        )
        assert 0.0 <= float(summary["test_accuracy"]) <= 1.0
        assert "robust_accuracy_fgsm" in summary
        assert "robust_accuracy_pgd" in summary
        assert "margin_balance" in summary
        assert summary["stationary_exists"] == "True"
        assert "clamp_count" in summary
        assert "train_wall_seconds" in summary
        assert any(k.startswith("hash_") for k in summary)

    def test_echo_reproduces_run(self, run_dir):
        tmp, cfg, out = run_dir
        echo = out / "config_echo.yaml"
        out2 = tmp / "run_echo"
        assert main(["train", "--config", str(echo), "--out", str(out2)]) == 0
        assert main(["attack", "--config", str(echo), "--out", str(out2)]) == 0
        for name in ("trace.csv", "attack_fgsm.csv", "attack_pgd.csv"):
            assert (out / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_checkpoints_load(self, run_dir):
        from spnet.nn import load_checkpoint

        _, _, out = run_dir
        net = load_checkpoint(out / "best.ckpt")
        assert net.input_dim == 2
        assert net.output_dim == 2

    def test_stationary_subcommand(self, capsys):
        assert main(["stationary", "--kind", "sp_ce", "--variant", "single_term",
                     "--eta", "2"]) == 0
        out = capsys.readouterr().out
        assert "exists=true" in out
        assert "0.5" in out

    def test_stationary_reports_missing_point(self, capsys):
        assert main(["stationary", "--kind", "ce"]) == 0
        assert "exists=false" in capsys.readouterr().out

    def test_stationary_curve_file(self, tmp_path, capsys):
        curve = tmp_path / "curve.csv"
        assert main(["stationary", "--kind", "sp_focal", "--eta", "0.03",
                     "--curve", str(curve)]) == 0
        lines = curve.read_text().splitlines()
        assert lines[0] == "z_gap,xi,value,dvalue_dz"
        assert len(lines) > 100


class TestDeterminism:
    def test_byte_identical_pipeline(self, tmp_path):
        cfg = write_config(tmp_path, {
            "train.epochs": 20,
            "analysis.resolution": 30,
        })
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
            assert main(["attack", "--config", str(cfg), "--out", str(out)]) == 0
            assert main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
            assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out)
        a, b = outs
        for name in ("trace.csv", "attack_fgsm.csv", "attack_pgd.csv",
                     "boundary.csv", "landscape.csv", "sweep_pgd.csv",
                     "best.ckpt", "final.ckpt", "config_echo.yaml"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_different_seed_changes_results(self, tmp_path):
        cfg = write_config(tmp_path, {"train.epochs": 10})
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["train", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["train", "--config", str(cfg), "--seed", "8",
                     "--out", str(out2)]) == 0
        assert (out1 / "best.ckpt").read_bytes() != (out2 / "best.ckpt").read_bytes()
