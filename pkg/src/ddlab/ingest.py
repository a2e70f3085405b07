"""Feature-table serialization: DDFT binary format and CSV fallback.

DDFT layout (all integers and floats little-endian):

    bytes 0..3   magic "DDFT"
    u32          version (currently 1)
    u64, u64     n (rows), q (feature width)
    u8           flags: bit0 labels, bit1 logits, bit2 classifier head
    u32          C (classes), present iff bit1 or bit2 is set
    payload      float64/uint32 blocks, row-major, in fixed order:
                 features n*q f64; labels n u32; logits n*C f64;
                 head W C*q f64; head b C f64

Block sizes are implied by the header, so the payload length must match
exactly; shortfalls name the first truncated block and surpluses are
trailing bytes.  CSV files carry the same table with header columns
f0..f{q-1}, optional label, optional l0..l{C-1}; floats are written in
shortest round-trip form so read(write(t)) preserves every bit.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ood_scores import ClassifierHead, ModelOutputs, check_head_consistency

MAGIC = b"DDFT"
VERSION = 1

_FLAG_LABELS = 0b001
_FLAG_LOGITS = 0b010
_FLAG_HEAD = 0b100


class IngestError(Exception):
    """Base class for table serialization failures."""


class FormatError(IngestError):
    """The file is not a recognizable table at all."""


class CorruptFileError(IngestError):
    """The header is valid but the payload does not match it."""


class DataError(IngestError):
    """The table parsed but carries unusable values."""


def _first_bad(arr: np.ndarray, block: str) -> DataError:
    bad = np.argwhere(~np.isfinite(arr))
    where = tuple(int(i) for i in bad[0])
    return DataError(f"non-finite value in {block} at {where}")


def _check_finite(arr: np.ndarray, block: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise _first_bad(arr, block)


def write_table(outputs: ModelOutputs, path: str | Path, head: ClassifierHead | None = None) -> None:
    """Serialize a table (and optional head) to the binary format."""
    n, q = outputs.features.shape
    if n < 1 or q < 1:
        raise ValueError(f"table must be non-empty, got shape ({n}, {q})")
    flags = 0
    num_classes = None
    if outputs.labels is not None:
        flags |= _FLAG_LABELS
    if outputs.logits is not None:
        flags |= _FLAG_LOGITS
        num_classes = outputs.logits.shape[1]
    if head is not None:
        flags |= _FLAG_HEAD
        if head.W.shape[1] != q:
            raise ValueError(f"head expects width {head.W.shape[1]}, table has {q}")
        if num_classes is not None and head.num_classes != num_classes:
            raise ValueError("head and logits disagree on the class count")
        num_classes = num_classes or head.num_classes
        check_head_consistency(outputs, head)
    if outputs.labels is not None and num_classes is not None and outputs.labels.size:
        if int(outputs.labels.max()) >= num_classes:
            raise ValueError(f"labels must lie in [0, {num_classes})")

    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<QQ", n, q), struct.pack("<B", flags)]
    if num_classes is not None:
        parts.append(struct.pack("<I", num_classes))
    parts.append(np.ascontiguousarray(outputs.features, dtype="<f8").tobytes())
    if outputs.labels is not None:
        parts.append(np.ascontiguousarray(outputs.labels, dtype="<u4").tobytes())
    if outputs.logits is not None:
        parts.append(np.ascontiguousarray(outputs.logits, dtype="<f8").tobytes())
    if head is not None:
        parts.append(np.ascontiguousarray(head.W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(head.b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_table(path: str | Path) -> tuple[ModelOutputs, ClassifierHead | None]:
    """Parse a binary table; returns the outputs and the head if stored."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, not a DDFT table")
    header_len = 4 + 4 + 16 + 1
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated header")
    version, n, q, flags = struct.unpack_from("<IQQB", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if flags >> 3:
        raise FormatError(f"{path}: unknown flag bits {flags:#04x}")
    offset = header_len
    num_classes = None
    if flags & (_FLAG_LOGITS | _FLAG_HEAD):
        if len(raw) < offset + 4:
            raise FormatError(f"{path}: truncated header")
        (num_classes,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        if num_classes < 2:
            raise FormatError(f"{path}: class count must be >= 2, got {num_classes}")
    if n < 1 or q < 1:
        raise DataError(f"{path}: empty table (n={n}, q={q})")

    def take(count: int, dtype: str, block: str) -> np.ndarray:
        nonlocal offset
        nbytes = count * np.dtype(dtype).itemsize
        if len(raw) < offset + nbytes:
            raise CorruptFileError(
                f"{path}: truncated {block} block "
                f"(need {nbytes} bytes at offset {offset}, have {len(raw) - offset})"
            )
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset += nbytes
        return arr

    features = take(n * q, "<f8", "features").reshape(n, q)
    _check_finite(features, "features")
    labels = None
    if flags & _FLAG_LABELS:
        labels = take(n, "<u4", "labels").astype(np.int64)
        if num_classes is not None and labels.size and int(labels.max()) >= num_classes:
            bad = int(np.argmax(labels >= num_classes))
            raise DataError(f"{path}: label {int(labels[bad])} at row {bad} is >= C={num_classes}")
    logits = None
    if flags & _FLAG_LOGITS:
        logits = take(n * num_classes, "<f8", "logits").reshape(n, num_classes)
        _check_finite(logits, "logits")
    head = None
    if flags & _FLAG_HEAD:
        W = take(num_classes * q, "<f8", "head weights").reshape(num_classes, q)
        b = take(num_classes, "<f8", "head bias")
        _check_finite(W, "head weights")
        _check_finite(b, "head bias")
        head = ClassifierHead(W=W, b=b)
    if offset != len(raw):
        raise CorruptFileError(f"{path}: {len(raw) - offset} trailing bytes after payload")
    return ModelOutputs(features=features, labels=labels, logits=logits), head


@dataclass(frozen=True)
class CsvSchema:
    """Expected CSV layout, used to validate a file before accepting it."""

    q: int
    has_labels: bool = False
    num_classes: int = 0


def _csv_header(q: int, has_labels: bool, num_classes: int) -> list[str]:
    cols = [f"f{j}" for j in range(q)]
    if has_labels:
        cols.append("label")
    cols.extend(f"l{j}" for j in range(num_classes))
    return cols


def write_csv(outputs: ModelOutputs, path: str | Path) -> None:
    """Write a table as CSV with shortest round-trip float formatting."""
    n, q = outputs.features.shape
    if n < 1 or q < 1:
        raise ValueError(f"table must be non-empty, got shape ({n}, {q})")
    num_classes = outputs.logits.shape[1] if outputs.logits is not None else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_csv_header(q, outputs.labels is not None, num_classes))
        for i in range(n):
            row = [repr(float(v)) for v in outputs.features[i]]
            if outputs.labels is not None:
                row.append(str(int(outputs.labels[i])))
            if outputs.logits is not None:
                row.extend(repr(float(v)) for v in outputs.logits[i])
            writer.writerow(row)


def read_csv(path: str | Path, schema: CsvSchema | None = None) -> ModelOutputs:
    """Parse a CSV table, inferring the layout from its header row."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        q = 0
        while q < len(header) and header[q] == f"f{q}":
            q += 1
        if q == 0:
            raise FormatError(f"{path}: header must start with feature columns f0, f1, ...")
        rest = header[q:]
        has_labels = bool(rest) and rest[0] == "label"
        if has_labels:
            rest = rest[1:]
        num_classes = 0
        while num_classes < len(rest) and rest[num_classes] == f"l{num_classes}":
            num_classes += 1
        if rest[num_classes:]:
            raise FormatError(f"{path}: unrecognized column {rest[num_classes]!r}")
        if schema is not None:
            found = CsvSchema(q=q, has_labels=has_labels, num_classes=num_classes)
            if found != schema:
                raise FormatError(f"{path}: layout {found} does not match expected {schema}")
        width = len(header)
        feats: list[list[float]] = []
        labels: list[int] = []
        logits: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != width:
                raise FormatError(f"{path}: line {line_no} has {len(row)} fields, expected {width}")
            try:
                feats.append([float(v) for v in row[:q]])
                if has_labels:
                    labels.append(int(row[q]))
                if num_classes:
                    logits.append([float(v) for v in row[-num_classes:]])
            except ValueError as exc:
                raise FormatError(f"{path}: line {line_no}: {exc}") from None
    if not feats:
        raise DataError(f"{path}: empty table (header only)")
    features = np.array(feats)
    _check_finite(features, "features")
    logits_arr = None
    if num_classes:
        logits_arr = np.array(logits)
        _check_finite(logits_arr, "logits")
    labels_arr = np.array(labels, dtype=np.int64) if has_labels else None
    if labels_arr is not None and labels_arr.size and labels_arr.min() < 0:
        raise DataError(f"{path}: negative label at row {int(np.argmin(labels_arr))}")
    try:
        return ModelOutputs(features=features, labels=labels_arr, logits=logits_arr)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def read_any(path: str | Path) -> tuple[ModelOutputs, ClassifierHead | None]:
    """Read a table in either format, keyed on the binary magic."""
    with open(path, "rb") as fh:
        lead = fh.read(4)
    if lead == MAGIC:
        return read_table(path)
    return read_csv(path), None
