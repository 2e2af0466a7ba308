import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from inmap_exporter.cli import main
from inmap_exporter.datasets import load_split
from inmap_exporter.encoders import ClipEncoder
from inmap_exporter.export import encode_text_proxies, export_features
from inmap_exporter.formats import ExportError
from inmap_exporter.prompts import ENSEMBLE_TEMPLATES, templates_for

# the consumer package: used only by tests to validate the wire contract
from inmap.store import load_labels, load_matrix, validate_labels


class TestDataset:
    def test_deterministic_listing(self, image_folder):
        split = load_split(image_folder, "val")
        assert split.class_names == ("cat", "dog", "owl")
        assert len(split) == 12
        labels = [idx for _, idx in split.items]
        assert labels == sorted(labels)

    def test_classnames_mapping(self, image_folder):
        (image_folder / "val" / "classnames.json").write_text(
            json.dumps({"cat": "tabby cat"})
        )
        split = load_split(image_folder, "val")
        assert split.class_names[0] == "tabby cat"

    def test_missing_split_is_fatal(self, image_folder):
        with pytest.raises(ExportError, match="not found"):
            load_split(image_folder, "train")


class TestExport:
    def test_files_pass_consumer_validation(self, image_folder, fake_encoder, tmp_path):
        split = load_split(image_folder, "val")
        manifest = export_features(fake_encoder, split, tmp_path / "out")
        features = load_matrix(tmp_path / "out" / "images.mat")
        proxies = load_matrix(tmp_path / "out" / "text_proxies.mat")
        labels = load_labels(tmp_path / "out" / "labels.lbl")
        assert features.shape == (12, 12)
        assert proxies.shape == (3, 12)
        validate_labels(labels, proxies.shape[0])
        np.testing.assert_allclose(
            np.linalg.norm(features.astype(np.float64), axis=1), 1.0, atol=1e-5
        )
        np.testing.assert_allclose(
            np.linalg.norm(proxies.astype(np.float64), axis=1), 1.0, atol=1e-5
        )
        assert manifest["feature_dim"] == fake_encoder.feature_dim

    def test_checksums_match_files(self, image_folder, fake_encoder, tmp_path):
        split = load_split(image_folder, "val")
        manifest = export_features(fake_encoder, split, tmp_path / "out")
        for name, entry in manifest["files"].items():
            digest = hashlib.sha256((tmp_path / "out" / name).read_bytes()).hexdigest()
            assert digest == entry["sha256"], name

    def test_manifest_records_prompts(self, image_folder, fake_encoder, tmp_path):
        split = load_split(image_folder, "val")
        export_features(fake_encoder, split, tmp_path / "out", prompt_mode="ensemble")
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["prompt_templates"] == list(ENSEMBLE_TEMPLATES)
        assert len(manifest["prompt_templates"]) == 7

    def test_single_vs_ensemble_differ(self, image_folder, fake_encoder, tmp_path):
        split = load_split(image_folder, "val")
        export_features(fake_encoder, split, tmp_path / "single", prompt_mode="single")
        export_features(fake_encoder, split, tmp_path / "ens", prompt_mode="ensemble")
        a = load_matrix(tmp_path / "single" / "text_proxies.mat")
        b = load_matrix(tmp_path / "ens" / "text_proxies.mat")
        assert np.abs(a - b).max() > 1e-3

    def test_deterministic_bytes(self, image_folder, fake_encoder, tmp_path):
        split = load_split(image_folder, "val")
        export_features(fake_encoder, split, tmp_path / "a")
        export_features(fake_encoder, split, tmp_path / "b")
        for name in ("images.mat", "text_proxies.mat", "labels.lbl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_ensemble_math(self, fake_encoder):
        """Proxy = renormalized mean of the unit template embeddings."""
        templates = templates_for("ensemble")
        raw = np.asarray(fake_encoder.encode_texts([t.format("cat") for t in templates]))
        unit = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        expected = unit.mean(axis=0)
        expected /= np.linalg.norm(expected)
        got = encode_text_proxies(fake_encoder, ["cat"], templates)[0]
        np.testing.assert_allclose(got, expected, atol=1e-12)


class TestPrimaryConsumption:
    def test_pipeline_runs_on_exported_files(self, image_folder, fake_encoder, tmp_path):
        """The primary CLI consumes the export with no exporter code loaded."""
        split = load_split(image_folder, "val")
        export_features(fake_encoder, split, tmp_path / "out")
        run_dir = tmp_path / "run"
        proc = subprocess.run(
            [
                sys.executable, "-m", "inmap.cli", "infer",
                "--images", str(tmp_path / "out" / "images.mat"),
                "--text-proxies", str(tmp_path / "out" / "text_proxies.mat"),
                "--labels", str(tmp_path / "out" / "labels.lbl"),
                "--pgd-iters", "50",
                "--out-dir", str(run_dir),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0


class TestClipEncoder:
    def test_missing_checkpoint_is_fatal(self):
        with pytest.raises(ExportError, match="cannot load CLIP checkpoint"):
            ClipEncoder.load("/nonexistent/checkpoint")

    def test_tiny_checkpoint_roundtrip(self, image_folder, tmp_path):
        """Full adapter path against a locally constructed tiny CLIP."""
        torch = pytest.importorskip("torch")
        transformers = pytest.importorskip("transformers")
        from transformers import (
            CLIPConfig,
            CLIPImageProcessor,
            CLIPModel,
            CLIPProcessor,
            CLIPTokenizer,
        )

        tok_dir = tmp_path / "tok"
        tok_dir.mkdir()
        vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
        for ch in "abcdefghijklmnopqrstuvwxyz0123456789.()-_'":
            vocab.setdefault(ch, len(vocab))
            vocab.setdefault(ch + "</w>", len(vocab))
        (tok_dir / "vocab.json").write_text(json.dumps(vocab))
        (tok_dir / "merges.txt").write_text("#version: 0.2\n")
        tokenizer = CLIPTokenizer(str(tok_dir / "vocab.json"), str(tok_dir / "merges.txt"))

        config = CLIPConfig(
            text_config=dict(
                vocab_size=tokenizer.vocab_size + 10,
                hidden_size=32,
                intermediate_size=64,
                num_hidden_layers=2,
                num_attention_heads=2,
                max_position_embeddings=77,
                bos_token_id=tokenizer.bos_token_id,
                eos_token_id=tokenizer.eos_token_id,
            ),
            vision_config=dict(
                hidden_size=32,
                intermediate_size=64,
                num_hidden_layers=2,
                num_attention_heads=2,
                image_size=32,
                patch_size=16,
            ),
            projection_dim=24,
        )
        torch.manual_seed(0)
        checkpoint = tmp_path / "ckpt"
        CLIPModel(config).save_pretrained(checkpoint)
        CLIPProcessor(
            image_processor=CLIPImageProcessor(
                size={"shortest_edge": 32}, crop_size={"height": 32, "width": 32}
            ),
            tokenizer=tokenizer,
        ).save_pretrained(checkpoint)

        encoder = ClipEncoder.load(str(checkpoint))
        assert encoder.feature_dim == 24
        split = load_split(image_folder, "val")
        manifest = export_features(
            encoder, split, tmp_path / "out", prompt_mode="single", batch_size=5
        )
        assert manifest["feature_dim"] == 24
        features = load_matrix(tmp_path / "out" / "images.mat")
        assert features.shape == (12, 24)
        np.testing.assert_allclose(
            np.linalg.norm(features.astype(np.float64), axis=1), 1.0, atol=1e-5
        )


class TestCli:
    def test_export_command(self, image_folder, tmp_path, monkeypatch):
        # route the CLI at the fake encoder to keep the command path testable
        from inmap_exporter import cli as cli_module
        from conftest import FakeEncoder

        monkeypatch.setattr(
            cli_module.ClipEncoder, "load", staticmethod(lambda name, device="cpu": FakeEncoder())
        )
        rc = main(
            [
                "export",
                "--model", "fake",
                "--dataset", "toyset",
                "--split", "val",
                "--prompts", "ensemble",
                "--data-root", str(image_folder.parent),
                "--out-dir", str(tmp_path / "out"),
            ]
        )
        assert rc == 0
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_missing_dataset_fatal(self, tmp_path, capsys):
        rc = main(
            [
                "export",
                "--model", "fake",
                "--dataset", "nope",
                "--data-root", str(tmp_path),
                "--out-dir", str(tmp_path / "out"),
            ]
        )
        assert rc == 1
        assert "fatal" in capsys.readouterr().err
