"""Dataset ingestion.

Formats
-------
csv
    Header row, then one sample per row.
raw-f32
    Little-endian float32, row-major, with a JSON sidecar ``<path>.json``
    holding ``{"n": ..., "d": ...}``.
raw-u8
    Bytes with the same sidecar; byte ``i`` maps to ``-1 + (2/255) i`` and
    the grid spacing 2/255 is recorded as ``delta``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

U8_DELTA = 2.0 / 255.0
FORMATS = ("csv", "raw-f32", "raw-u8")


class ParseError(ValueError):
    pass


@dataclass
class Dataset:
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def delta(self) -> float | None:
        return self.meta.get("delta")


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        d = len(header)
        for row in reader:
            if not row:
                continue
            if len(row) != d:
                raise ParseError(f"{path}:{reader.line_num}: expected {d} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{reader.line_num}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no samples after header")
    X = np.array(rows)
    if not np.all(np.isfinite(X)):
        line = 2 + int(np.argmax(~np.all(np.isfinite(X), axis=1)))
        raise ParseError(f"{path}:{line}: non-finite value")
    return X


def _sidecar(path: Path) -> tuple[int, int]:
    side = path.with_name(path.name + ".json")
    try:
        doc = json.loads(side.read_text())
        n, d = int(doc["n"]), int(doc["d"])
    except FileNotFoundError:
        raise ParseError(f"{path}: missing sidecar {side.name}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{side}: bad sidecar ({exc})") from None
    if n < 1 or d < 1:
        raise ParseError(f"{side}: n and d must be positive")
    return n, d


def _read_raw(path: Path, dtype, itemsize: int) -> np.ndarray:
    n, d = _sidecar(path)
    size = path.stat().st_size
    if size != n * d * itemsize:
        raise ParseError(f"{path}: {size} bytes but sidecar says n*d = {n}*{d} ({n * d * itemsize} bytes)")
    return np.fromfile(path, dtype=dtype).reshape(n, d)


def ingest(path, fmt: str = "csv") -> Dataset:
    """Read a dataset from disk; the file is never modified."""
    path = Path(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    if not path.exists():
        raise FileNotFoundError(path)
    if fmt == "csv":
        X = _read_csv(path)
        return Dataset(X, {"format": fmt, "n": X.shape[0], "d": X.shape[1]})
    if fmt == "raw-f32":
        X = _read_raw(path, "<f4", 4).astype(float)
        if not np.all(np.isfinite(X)):
            off = int(np.argmax(~np.isfinite(X.ravel()))) * 4
            raise ParseError(f"{path}: non-finite value at byte offset {off}")
        return Dataset(X, {"format": fmt, "n": X.shape[0], "d": X.shape[1]})
    X = -1.0 + U8_DELTA * _read_raw(path, np.uint8, 1).astype(float)
    return Dataset(X, {"format": fmt, "n": X.shape[0], "d": X.shape[1], "delta": U8_DELTA})


def write_raw(path, X, fmt: str = "raw-f32") -> None:
    """Write ``X`` plus its sidecar; for ``raw-u8`` values are rounded onto the 2/255 grid."""
    path = Path(path)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if fmt == "raw-f32":
        X.astype("<f4").tofile(path)
    elif fmt == "raw-u8":
        np.clip(np.rint((X + 1.0) / U8_DELTA), 0, 255).astype(np.uint8).tofile(path)
    else:
        raise ValueError(f"unknown raw format {fmt!r}")
    path.with_name(path.name + ".json").write_text(json.dumps({"n": X.shape[0], "d": X.shape[1]}))
