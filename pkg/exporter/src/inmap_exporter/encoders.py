"""CLIP encoder adapter.

Any object with ``encode_images(list of PIL images) -> (B, d) array``,
``encode_texts(list of str) -> (B, d) array`` and a ``name`` attribute works
as an encoder; tests inject deterministic fakes. ``ClipEncoder`` wraps a
transformers CLIP checkpoint; torch and transformers are imported lazily so
the exporter stays importable without them.
"""

from __future__ import annotations

import numpy as np

from .formats import ExportError


def _unwrap(output, torch):
    # transformers v5 returns a pooled-output container, v4 a tensor
    if isinstance(output, torch.Tensor):
        return output
    return output.pooler_output


class ClipEncoder:
    def __init__(self, model, processor, device: str, name: str):
        self._model = model
        self._processor = processor
        self._device = device
        self.name = name

    @classmethod
    def load(cls, name_or_path: str, device: str = "cpu") -> "ClipEncoder":
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ExportError(
                "torch and transformers are required to load a CLIP checkpoint; "
                "install the exporter's 'clip' extra"
            ) from exc
        try:
            model = CLIPModel.from_pretrained(name_or_path)
            processor = CLIPProcessor.from_pretrained(name_or_path)
        except Exception as exc:
            raise ExportError(
                f"cannot load CLIP checkpoint {name_or_path!r}: {exc}. The checkpoint "
                "must be available locally (a directory with model and processor files)."
            ) from exc
        model = model.eval().to(device)
        return cls(model, processor, device, str(name_or_path))

    @property
    def feature_dim(self) -> int:
        return int(self._model.config.projection_dim)

    def encode_images(self, images) -> np.ndarray:
        import torch

        inputs = self._processor(images=list(images), return_tensors="pt").to(self._device)
        with torch.no_grad():
            feats = _unwrap(self._model.get_image_features(**inputs), torch)
        return feats.cpu().numpy()

    def encode_texts(self, texts) -> np.ndarray:
        import torch

        inputs = self._processor(
            text=list(texts), return_tensors="pt", padding=True, truncation=True
        ).to(self._device)
        with torch.no_grad():
            feats = _unwrap(self._model.get_text_features(**inputs), torch)
        return feats.cpu().numpy()
