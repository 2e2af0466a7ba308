"""Image-folder dataset listing.

A dataset split is a directory of class subdirectories; every image file in
a class directory belongs to that class. Iteration order is deterministic:
classes sorted by directory name, files sorted within each class. A
``classnames.json`` next to the class directories can map directory names to
display names (for example synset ids to words).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .formats import ExportError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}


@dataclass(frozen=True)
class ImageFolderSplit:
    root: Path
    class_dirs: tuple
    class_names: tuple
    items: tuple  # (path, class index), grouped by class

    @property
    def num_classes(self) -> int:
        return len(self.class_dirs)

    def __len__(self) -> int:
        return len(self.items)


def load_split(dataset_root, split: str) -> ImageFolderSplit:
    root = Path(dataset_root) / split if split not in (".", "") else Path(dataset_root)
    if not root.is_dir():
        raise ExportError(
            f"dataset split directory not found: {root} (expected class subdirectories)"
        )
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ExportError(f"{root} contains no class subdirectories")

    names_file = root / "classnames.json"
    mapping = {}
    if names_file.is_file():
        mapping = json.loads(names_file.read_text())
    class_names = tuple(
        str(mapping.get(p.name, p.name.replace("_", " "))) for p in class_dirs
    )

    items = []
    for index, class_dir in enumerate(class_dirs):
        files = sorted(
            f for f in class_dir.iterdir()
            if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise ExportError(f"class directory {class_dir} contains no images")
        items.extend((f, index) for f in files)
    return ImageFolderSplit(
        root=root,
        class_dirs=tuple(class_dirs),
        class_names=class_names,
        items=tuple(items),
    )
