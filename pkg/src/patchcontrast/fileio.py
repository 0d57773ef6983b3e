"""On-disk formats: FMAP1 feature maps, head parameters, CSV and PGM.

FMAP1 layout (little-endian):

    offset 0   4 bytes   magic "FMAP"
    offset 4   1 byte    version, must be 1
    offset 5   3 x u32   H, W, C
    offset 17  H*W*C     IEEE-754 float32 values in [h][w][c] order

Values are float32 on disk and widened to float64 in memory; writing casts
down, so write-then-read is exact only for float32-representable values
(read-write-read always is). Malformed files raise a specific
FmapFormatError subclass naming the byte offset of the problem.

CSV output is RFC-4180 style with a header row and 17-significant-digit
floats, enough for exact float64 round trips.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from typing import Sequence

import numpy as np

from .embedding import FeatureMap, ProjectionHead

__all__ = [
    "BadMagicError",
    "BadVersionError",
    "DimensionError",
    "FmapFormatError",
    "TruncatedError",
    "format_float",
    "load_head",
    "read_fmap",
    "read_grid_csv",
    "save_head",
    "write_csv",
    "write_fmap",
    "write_grid_csv",
    "write_pgm",
]

_MAGIC = b"FMAP"
_VERSION = 1
_HEADER = struct.Struct("<4sBIII")
# guards H*W*C against absurd headers before any allocation
_MAX_ELEMENTS = 1 << 31


class FmapFormatError(Exception):
    """Base for FMAP1 parse failures; ``offset`` is the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagicError(FmapFormatError):
    pass


class BadVersionError(FmapFormatError):
    pass


class DimensionError(FmapFormatError):
    pass


class TruncatedError(FmapFormatError):
    pass


def write_fmap(path, fm: FeatureMap) -> None:
    h, w, c = fm.height, fm.width, fm.channels
    payload = fm.values.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, h, w, c))
        fh.write(payload)


def read_fmap(path) -> FeatureMap:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedError("file shorter than the FMAP1 header", len(raw))
    magic, version, h, w, c = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {_MAGIC!r}", 0)
    if version != _VERSION:
        raise BadVersionError(f"unsupported version {version}", 4)
    if h < 1 or w < 1 or c < 1:
        raise DimensionError(f"dimensions must be positive, got {h}x{w}x{c}", 5)
    n = h * w * c
    if n > _MAX_ELEMENTS:
        raise DimensionError(f"dimension product {n} overflows the format limit", 5)
    expected = _HEADER.size + 4 * n
    if len(raw) != expected:
        raise TruncatedError(
            f"body has {len(raw) - _HEADER.size} bytes, header promises {4 * n}",
            min(len(raw), expected))
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=n)
    return FeatureMap(values.astype(np.float64).reshape(h, w, c))


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows) -> None:
    """Rows of floats/ints/strings; floats rendered with 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([
            format_float(v) if isinstance(v, float) else v for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_grid_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        return np.array([[float(v) for v in row] for row in reader])


def write_grid_csv(path, grid: np.ndarray) -> None:
    header = [f"w{j}" for j in range(grid.shape[1])]
    write_csv(path, header, ([float(v) for v in row] for row in grid))


def write_pgm(path, grid: np.ndarray) -> None:
    """8-bit binary PGM with linear min-max scaling (flat grids render black)."""
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        scaled = np.round((grid - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(grid)
    pixels = scaled.astype(np.uint8)
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _tagged(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _untagged(obj, name: str) -> np.ndarray:
    try:
        return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed array field {name!r} in head file") from exc


def save_head(path, head: ProjectionHead) -> None:
    doc = {
        "format": "patchcontrast-head-v1",
        "activation": "relu",
        "normalize": head.normalize,
        "w1": _tagged(head.w1),
        "b1": _tagged(head.b1),
        "w2": _tagged(head.w2),
        "b2": _tagged(head.b2),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_head(path) -> ProjectionHead:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "patchcontrast-head-v1":
        raise ValueError(f"not a head parameter file: format={doc.get('format')!r}")
    return ProjectionHead(
        w1=_untagged(doc["w1"], "w1"),
        b1=_untagged(doc["b1"], "b1"),
        w2=_untagged(doc["w2"], "w2"),
        b2=_untagged(doc["b2"], "b2"),
        normalize=bool(doc.get("normalize", True)),
    )
