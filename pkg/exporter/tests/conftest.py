import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import hashlib  # noqa: E402

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from PIL import Image  # noqa: E402


class FakeEncoder:
    """Deterministic stand-in: features are seeded projections of content
    hashes, so equal inputs give equal rows and the export is reproducible."""

    name = "fake-encoder"
    feature_dim = 12

    def _vector(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")
        return np.random.default_rng(seed).standard_normal(self.feature_dim)

    def encode_images(self, images):
        return np.stack([self._vector(img.tobytes()) for img in images])

    def encode_texts(self, texts):
        return np.stack([self._vector(t.encode()) for t in texts])


@pytest.fixture
def fake_encoder():
    return FakeEncoder()


@pytest.fixture
def image_folder(tmp_path):
    """Three classes, four small PNGs each, under <root>/val/."""
    rng = np.random.default_rng(7)
    split_dir = tmp_path / "toyset" / "val"
    for class_name in ("cat", "dog", "owl"):
        class_dir = split_dir / class_name
        class_dir.mkdir(parents=True)
        for i in range(4):
            pixels = rng.integers(0, 255, size=(16, 16, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(class_dir / f"img_{i}.png")
    return tmp_path / "toyset"
