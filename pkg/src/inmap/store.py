"""Deterministic loading and saving of embedding matrices, proxy sets, and labels.

Matrix files carry 8 magic bytes ``INMAPEM1``, a little-endian u32 row count,
u32 column count, a u8 dtype code (only 1 = IEEE-754 binary32 LE), 3 zero pad
bytes, then the row-major payload. Label files carry ``INMAPLB1``, a u32
count, then that many u32 class indices. Values are stored in 32-bit
precision; all arithmetic on loaded data happens in 64-bit.

A CSV fallback (first line ``n,d``, then one comma-separated row per line) is
accepted for matrix files smaller than 10 MB so test fixtures can be written
by hand.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DegenerateRowError,
    EmptyError,
    FormatError,
    IoError,
    LabelRangeError,
    TruncationError,
)

MATRIX_MAGIC = b"INMAPEM1"
LABEL_MAGIC = b"INMAPLB1"
DTYPE_F32 = 1
_HEADER = struct.Struct("<IIB3x")  # rows, cols, dtype code, pad
_CSV_MAX_BYTES = 10 * 1024 * 1024


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def load_matrix(path) -> np.ndarray:
    """Load a 2-D float32 matrix, bit-exact, without normalizing anything.

    Files starting with the matrix magic are decoded as binary; anything else
    under 10 MB is tried as the CSV fallback.
    """
    raw = _read_bytes(path)
    if raw[: len(MATRIX_MAGIC)] == MATRIX_MAGIC:
        return _decode_binary_matrix(raw, path)
    if len(raw) < _CSV_MAX_BYTES:
        return _decode_csv_matrix(raw, path)
    raise FormatError(f"{path}: bad magic and too large for the CSV fallback")


def _decode_binary_matrix(raw: bytes, path) -> np.ndarray:
    body = raw[len(MATRIX_MAGIC) :]
    if len(body) < _HEADER.size:
        raise TruncationError(f"{path}: header truncated")
    rows, cols, dtype_code = _HEADER.unpack_from(body)
    if dtype_code != DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype code {dtype_code}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: declares {rows}x{cols} matrix, need at least 1x1")
    payload = body[_HEADER.size :]
    expected = rows * cols * 4
    if len(payload) < expected:
        raise TruncationError(
            f"{path}: expected {expected} payload bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    if not np.isfinite(values).all():
        raise DataError(f"{path}: payload contains NaN or Inf")
    out = np.ascontiguousarray(values, dtype=np.float32)
    out.flags.writeable = False  # loaded matrices are immutable
    return out


def _decode_csv_matrix(raw: bytes, path) -> np.ndarray:
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: neither binary matrix nor ASCII CSV") from exc
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty CSV")
    try:
        rows, cols = (int(tok) for tok in lines[0].split(","))
    except ValueError as exc:
        raise FormatError(f"{path}: CSV header must be 'n,d', got {lines[0]!r}") from exc
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: declares {rows}x{cols} matrix, need at least 1x1")
    if len(lines) - 1 < rows:
        raise TruncationError(f"{path}: header declares {rows} rows, found {len(lines) - 1}")
    if len(lines) - 1 > rows:
        raise FormatError(f"{path}: {len(lines) - 1 - rows} extra rows after payload")
    out = np.empty((rows, cols), dtype=np.float32)
    for i, line in enumerate(lines[1:]):
        toks = line.split(",")
        if len(toks) != cols:
            raise TruncationError(f"{path}: row {i} has {len(toks)} values, expected {cols}")
        try:
            out[i] = [float(tok) for tok in toks]
        except ValueError as exc:
            raise DataError(f"{path}: row {i} has a non-numeric value") from exc
    if not np.isfinite(out).all():
        raise DataError(f"{path}: payload contains NaN or Inf")
    out.flags.writeable = False
    return out


def save_matrix(matrix: np.ndarray, path) -> None:
    """Write a matrix in the binary format; values are stored as float32."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError(f"need a 2-D matrix with at least one row and column, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise DataError("refusing to save NaN or Inf values")
    m32 = np.ascontiguousarray(m, dtype="<f4")
    rows, cols = m32.shape
    try:
        with open(path, "wb") as fh:
            fh.write(MATRIX_MAGIC)
            fh.write(_HEADER.pack(rows, cols, DTYPE_F32))
            fh.write(m32.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_labels(path) -> np.ndarray:
    """Load a vector of class indices (int64)."""
    raw = _read_bytes(path)
    if raw[: len(LABEL_MAGIC)] != LABEL_MAGIC:
        raise FormatError(f"{path}: bad label magic")
    body = raw[len(LABEL_MAGIC) :]
    if len(body) < 4:
        raise TruncationError(f"{path}: header truncated")
    (count,) = struct.unpack_from("<I", body)
    if count == 0:
        raise EmptyError(f"{path}: declares zero labels")
    payload = body[4:]
    if len(payload) < count * 4:
        raise TruncationError(f"{path}: expected {count * 4} payload bytes, found {len(payload)}")
    if len(payload) > count * 4:
        raise FormatError(f"{path}: {len(payload) - count * 4} trailing bytes")
    out = np.frombuffer(payload, dtype="<u4").astype(np.int64)
    out.flags.writeable = False
    return out


def save_labels(labels: np.ndarray, path) -> None:
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.size == 0:
        raise DataError(f"need a non-empty 1-D label vector, got shape {lab.shape}")
    if np.any(lab < 0) or np.any(lab > 0xFFFFFFFF):
        raise DataError("label indices must fit in u32")
    try:
        with open(path, "wb") as fh:
            fh.write(LABEL_MAGIC)
            fh.write(struct.pack("<I", lab.size))
            fh.write(np.ascontiguousarray(lab, dtype="<u4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def validate_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Check every index against a proxy set's class count."""
    lab = np.asarray(labels)
    bad = np.flatnonzero((lab < 0) | (lab >= num_classes))
    if bad.size:
        raise LabelRangeError(
            f"label {lab[bad[0]]} at position {bad[0]} outside [0, {num_classes})"
        )
    return lab


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Rescale every row to unit L2 norm; computed and returned in float64."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"need a 2-D matrix, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1)
    small = np.flatnonzero(norms < 1e-12)
    if small.size:
        raise DegenerateRowError(small[0], norms[small[0]])
    return m / norms[:, None]
