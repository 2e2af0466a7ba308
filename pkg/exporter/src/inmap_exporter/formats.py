"""Writers for the inmap binary wire formats.

Matrix file: 8 magic bytes ``INMAPEM1``, u32 LE rows, u32 LE cols, u8 dtype
code (1 = float32 LE), 3 zero pad bytes, then the row-major float32 payload.
Label file: ``INMAPLB1``, u32 LE count, then that many u32 LE indices.

Implemented against the byte layout alone so the exporter never depends on
the consumer package.
"""

from __future__ import annotations

import struct

import numpy as np

MATRIX_MAGIC = b"INMAPEM1"
LABEL_MAGIC = b"INMAPLB1"
_HEADER = struct.Struct("<IIB3x")


class ExportError(RuntimeError):
    """Fatal exporter failure with a user-facing message."""


def write_matrix(values: np.ndarray, path) -> None:
    m = np.asarray(values)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ExportError(f"matrix must be 2-D and non-empty, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ExportError("matrix contains NaN or Inf")
    m32 = np.ascontiguousarray(m, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(_HEADER.pack(m32.shape[0], m32.shape[1], 1))
        fh.write(m32.tobytes())


def write_labels(labels: np.ndarray, path) -> None:
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.size == 0:
        raise ExportError(f"labels must be 1-D and non-empty, got shape {lab.shape}")
    if np.any(lab < 0):
        raise ExportError("labels must be non-negative")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<I", lab.size))
        fh.write(np.ascontiguousarray(lab, dtype="<u4").tobytes())
