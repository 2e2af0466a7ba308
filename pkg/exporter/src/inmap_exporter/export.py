"""Feature export: encode an image-folder split and its class prompts into
the inmap matrix/label files plus an auditable manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .datasets import ImageFolderSplit
from .formats import ExportError, write_labels, write_matrix
from .prompts import templates_for


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ExportError("encoder produced a zero feature vector")
    return m / norms


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def encode_image_matrix(encoder, split: ImageFolderSplit, batch_size: int = 64) -> np.ndarray:
    """Unit-normalized feature rows for every image, in dataset order."""
    rows = []
    for start in range(0, len(split.items), batch_size):
        batch = split.items[start : start + batch_size]
        images = []
        for path, _ in batch:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
        rows.append(np.asarray(encoder.encode_images(images), dtype=np.float64))
    return _normalize_rows(np.vstack(rows))


def encode_text_proxies(encoder, class_names, templates) -> np.ndarray:
    """One unit proxy per class: unit template embeddings averaged, then
    renormalized."""
    proxies = []
    for name in class_names:
        embeddings = _normalize_rows(
            np.asarray(encoder.encode_texts([t.format(name) for t in templates]))
        )
        proxies.append(embeddings.mean(axis=0))
    return _normalize_rows(np.vstack(proxies))


def export_features(
    encoder,
    split: ImageFolderSplit,
    out_dir,
    *,
    prompt_mode: str = "ensemble",
    dataset_name: str = "",
    split_name: str = "",
    batch_size: int = 64,
) -> dict:
    """Write images.mat, text_proxies.mat, labels.lbl, and manifest.json.

    Returns the manifest dictionary (model, dataset, prompt templates, file
    paths, feature dimension, one checksum per emitted file).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    templates = templates_for(prompt_mode)

    features = encode_image_matrix(encoder, split, batch_size=batch_size)
    proxies = encode_text_proxies(encoder, split.class_names, templates)
    if features.shape[1] != proxies.shape[1]:
        raise ExportError(
            f"image features ({features.shape[1]}d) and text proxies "
            f"({proxies.shape[1]}d) disagree on dimension"
        )
    labels = np.asarray([idx for _, idx in split.items], dtype=np.int64)

    write_matrix(features, out / "images.mat")
    write_matrix(proxies, out / "text_proxies.mat")
    write_labels(labels, out / "labels.lbl")

    manifest = {
        "model": getattr(encoder, "name", ""),
        "dataset": dataset_name or str(split.root),
        "split": split_name,
        "prompt_mode": prompt_mode,
        "prompt_templates": list(templates),
        "feature_dim": int(features.shape[1]),
        "num_images": int(features.shape[0]),
        "num_classes": int(proxies.shape[0]),
        "class_names": list(split.class_names),
        "files": {
            name: {
                "role": role,
                "sha256": _sha256(out / name),
            }
            for name, role in (
                ("images.mat", "images"),
                ("text_proxies.mat", "text-proxies"),
                ("labels.lbl", "ground-truth"),
            )
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
