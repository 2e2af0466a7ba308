import json
import subprocess
import sys

import numpy as np
import pytest

from inmap.cli import main
from inmap.store import load_labels, load_matrix, save_labels, save_matrix
from inmap.theory import build_synthetic_model


@pytest.fixture
def model_dir(tmp_path):
    out = tmp_path / "model"
    rc = main(
        [
            "synth",
            "--dim", "8", "--classes", "5", "--samples", "300",
            "--overlap", "0.6", "--rank", "3", "--seed", "3",
            "--out-dir", str(out),
        ]
    )
    assert rc == 0
    return out


def _infer(model_dir, out, *extra):
    return main(
        [
            "infer",
            "--images", str(model_dir / "images.mat"),
            "--text-proxies", str(model_dir / "text_proxies.mat"),
            "--labels", str(model_dir / "labels.lbl"),
            "--out-dir", str(out),
            *extra,
        ]
    )


class TestSynth:
    def test_emits_loadable_files(self, model_dir):
        x = load_matrix(model_dir / "images.mat")
        z = load_matrix(model_dir / "text_proxies.mat")
        w = load_matrix(model_dir / "true_proxies.mat")
        y = load_labels(model_dir / "labels.lbl")
        assert x.shape == (300, 16) and z.shape == (5, 16) and w.shape == (5, 16)
        assert y.shape == (300,)
        meta = json.loads((model_dir / "model.json").read_text())
        assert meta["overlap"] == 0.6 and meta["ambient_dim"] == 16

    def test_deterministic(self, tmp_path):
        args = ["synth", "--dim", "4", "--classes", "3", "--samples", "20", "--overlap",
                "0.5", "--rank", "2", "--seed", "9"]
        main([*args, "--out-dir", str(tmp_path / "a")])
        main([*args, "--out-dir", str(tmp_path / "b")])
        assert (tmp_path / "a" / "images.mat").read_bytes() == (
            tmp_path / "b" / "images.mat"
        ).read_bytes()


class TestInfer:
    def test_outputs_and_manifest(self, model_dir, tmp_path):
        out = tmp_path / "run"
        assert _infer(model_dir, out, "--pgd-iters", "200") == 0
        for name in ("predictions.lbl", "proxies.mat", "trace.csv", "metrics.json", "manifest.json"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["pgd_iters"] == 200
        assert manifest["config"]["tau_i"] == 0.04
        assert manifest["files"]["proxies.mat"]["role"] == "vision-proxies"
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        trace_lines = (out / "trace.csv").read_text().strip().splitlines()
        assert len(trace_lines) == 201

    def test_byte_identical_reruns(self, model_dir, tmp_path):
        _infer(model_dir, tmp_path / "r1", "--pgd-iters", "150")
        _infer(model_dir, tmp_path / "r2", "--pgd-iters", "150")
        for name in ("predictions.lbl", "proxies.mat", "trace.csv", "metrics.json"):
            assert (tmp_path / "r1" / name).read_bytes() == (
                tmp_path / "r2" / name
            ).read_bytes(), name

    def test_all_refinements_off_is_baseline_bitwise(self, model_dir, tmp_path):
        _infer(model_dir, tmp_path / "off", "--alpha", "1", "--gamma", "1", "--pgd-iters", "0")
        _infer(model_dir, tmp_path / "base", "--mode", "baseline")
        assert (tmp_path / "off" / "predictions.lbl").read_bytes() == (
            tmp_path / "base" / "predictions.lbl"
        ).read_bytes()

    def test_mode_flags_produce_distinct_predictions(self, tmp_path):
        # overlapping clusters leave enough ambiguous rows that every
        # refinement stage changes some predictions
        out = tmp_path / "model"
        main(
            [
                "synth",
                "--dim", "8", "--classes", "5", "--samples", "500",
                "--overlap", "0.6", "--rank", "2", "--concentration", "4",
                "--seed", "0", "--out-dir", str(out),
            ]
        )
        blobs = {}
        for mode in ("inmap25", "inmap50", "sinkhorn", "inmap"):
            _infer(out, tmp_path / mode, "--mode", mode, "--pgd-iters", "400")
            blobs[mode] = (tmp_path / mode / "predictions.lbl").read_bytes()
        assert len(set(blobs.values())) == 4

    def test_config_file_and_flag_override(self, model_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "\n".join(
                [
                    "# pipeline settings",
                    f"images={model_dir / 'images.mat'}",
                    f"text-proxies={model_dir / 'text_proxies.mat'}",
                    "tau-i=0.02",
                    "pgd-iters=100",
                    f"out-dir={tmp_path / 'cfg-run'}",
                ]
            )
        )
        rc = main(["infer", "--config", str(cfg), "--tau-i", "0.05"])
        assert rc == 0
        manifest = json.loads((tmp_path / "cfg-run" / "manifest.json").read_text())
        assert manifest["config"]["tau_i"] == 0.05  # flag beats file
        assert manifest["config"]["pgd_iters"] == 100  # file beats default

    def test_train_set_mode_switches_defaults(self, model_dir, tmp_path):
        rc = main(
            [
                "infer",
                "--images", str(model_dir / "images.mat"),
                "--text-proxies", str(model_dir / "text_proxies.mat"),
                "--proxy-train-images", str(model_dir / "images.mat"),
                "--pgd-iters", "50",
                "--out-dir", str(tmp_path / "train-mode"),
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "train-mode" / "manifest.json").read_text())
        assert manifest["config"]["tau_i"] == 0.03
        assert manifest["config"]["alpha"] == 0.4


class TestStagedCommands:
    def test_pseudo_then_learn_proxy_matches_infer(self, model_dir, tmp_path):
        rc = main(
            [
                "pseudo",
                "--images", str(model_dir / "images.mat"),
                "--text-proxies", str(model_dir / "text_proxies.mat"),
                "--out-dir", str(tmp_path / "stage1"),
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "stage1" / "manifest.json").read_text())
        assert manifest["files"]["pseudo_labels.mat"]["role"] == "thresholded"
        rc = main(
            [
                "learn-proxy",
                "--pseudo-labels", str(tmp_path / "stage1" / "pseudo_labels.mat"),
                "--images", str(model_dir / "images.mat"),
                "--text-proxies", str(model_dir / "text_proxies.mat"),
                "--pgd-iters", "200",
                "--out-dir", str(tmp_path / "stage2"),
            ]
        )
        assert rc == 0
        _infer(model_dir, tmp_path / "direct", "--pgd-iters", "200")
        direct = load_matrix(tmp_path / "direct" / "proxies.mat")
        staged = load_matrix(tmp_path / "stage2" / "proxies.mat")
        # staged pseudo labels round-trip through float32 storage
        assert np.abs(direct - staged).max() < 1e-5

    def test_eval_command(self, model_dir, tmp_path):
        _infer(model_dir, tmp_path / "run")
        out = tmp_path / "metrics.json"
        rc = main(
            [
                "eval",
                "--pred", str(tmp_path / "run" / "predictions.lbl"),
                "--labels", str(model_dir / "labels.lbl"),
                "--images", str(model_dir / "images.mat"),
                "--proxies", str(tmp_path / "run" / "proxies.mat"),
                "--out", str(out),
            ]
        )
        assert rc == 0
        direct = json.loads((tmp_path / "run" / "metrics.json").read_text())
        relayed = json.loads(out.read_text())
        assert relayed["accuracy"] == direct["accuracy"]


class TestExitCodes:
    def test_config_error_is_2(self, model_dir, tmp_path):
        rc = _infer(model_dir, tmp_path / "x", "--alpha", "7")
        assert rc == 2

    def test_missing_required_input_is_2(self, tmp_path):
        rc = main(["infer", "--images", "whatever.mat", "--out-dir", str(tmp_path)])
        assert rc == 2

    def test_data_error_is_3(self, tmp_path):
        bad = tmp_path / "bad.mat"
        bad.write_bytes(b"NOTAMAGIC-------")
        z = tmp_path / "z.mat"
        save_matrix(np.eye(3, dtype=np.float32), z)
        rc = main(
            ["infer", "--images", str(bad), "--text-proxies", str(z), "--out-dir", str(tmp_path)]
        )
        assert rc == 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerics_error_is_4(self, model_dir, tmp_path):
        # a denormal learning temperature overflows the gradient
        rc = _infer(model_dir, tmp_path / "x", "--tau-i", "1e-308", "--pgd-iters", "5")
        assert rc == 4


class TestVerifyTheory:
    def test_report_structure(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        rc = main(
            [
                "verify-theory",
                "--prop1-trials", "200",
                "--thm1-models", "5",
                "--thm2-models", "1",
                "--pgd-iters", "300",
                "--out", str(out),
            ]
        )
        assert rc == 0
        report = json.loads(out.read_text())
        names = {c["name"] for c in report["checks"]}
        assert names == {
            "prop1-ranking-bound",
            "prop3-temperature-calibration",
            "thm1-proxy-gap-bound",
            "thm2-noise-trend",
        }
        for check in report["checks"]:
            assert check["violations"] == 0, check


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "inmap.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "verify-theory" in proc.stdout
