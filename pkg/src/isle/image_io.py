"""Raster and label-table interchange: binary PGM (P5) and a minimal CSV dialect."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Image",
    "LabelTable",
    "FormatError",
    "read_pgm",
    "write_pgm",
    "read_labels_csv",
    "write_labels_csv",
]

_ASSET_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


class FormatError(ValueError):
    """Raised for malformed PGM or CSV input."""


@dataclass(frozen=True, eq=False)
class Image:
    """Grayscale raster. ``pixels`` is a (height, width) integer array."""

    width: int
    height: int
    bit_depth: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise ValueError(
                f"pixel grid {px.shape} does not match {self.height}x{self.width}"
            )
        if px.size and (px.min() < 0 or px.max() > self.maxval):
            raise ValueError(f"sample outside [0, {self.maxval}]")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        px = px.astype(dtype, copy=False)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def maxval(self) -> int:
        return (1 << self.bit_depth) - 1

    @classmethod
    def from_array(cls, arr, bit_depth: int = 8) -> "Image":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(arr.shape[1], arr.shape[0], bit_depth, arr)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.bit_depth == other.bit_depth
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


def _pgm_tokens(data: bytes, count: int):
    """Pull ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in b" \t\r\n":
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and data[pos] not in b" \t\r\n#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if pos >= n or data[pos] not in b" \t\r\n":
        raise FormatError("PGM header must end with a single whitespace byte")
    return tokens, pos + 1


def read_pgm(data: bytes) -> Image:
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (magic P5 expected)")
    tokens, offset = _pgm_tokens(data[2:], 3)
    offset += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"non-numeric PGM header field in {tokens!r}") from None
    if width < 1 or height < 1:
        raise FormatError(f"invalid PGM dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"maxval {maxval} outside 1..65535")

    bit_depth = 8 if maxval <= 255 else 16
    sample_bytes = bit_depth // 8
    need = width * height * sample_bytes
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise FormatError(
            f"truncated pixel payload: {len(payload)} of {need} bytes present"
        )
    dtype = np.uint8 if bit_depth == 8 else np.dtype(">u2")
    px = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if px.max() > maxval:
        raise FormatError(f"sample exceeds declared maxval {maxval}")
    return Image(width, height, bit_depth, px.astype(np.uint8 if bit_depth == 8 else np.uint16))


def write_pgm(img: Image) -> bytes:
    header = f"P5\n{img.width} {img.height}\n{img.maxval}\n".encode("ascii")
    if img.bit_depth == 8:
        payload = img.pixels.astype(np.uint8).tobytes()
    else:
        payload = img.pixels.astype(">u2").tobytes()
    return header + payload


@dataclass(frozen=True)
class LabelTable:
    """Binary ground truth, one row per asset, columns in ``label_names`` order."""

    label_names: tuple
    asset_ids: tuple
    values: tuple  # tuple of per-row tuples of 0/1

    def __post_init__(self):
        if len(self.asset_ids) != len(self.values):
            raise ValueError("asset_ids and values differ in length")
        if len(set(self.asset_ids)) != len(self.asset_ids):
            raise ValueError("duplicate asset_id")
        k = len(self.label_names)
        for row in self.values:
            if len(row) != k:
                raise ValueError("ragged label row")
            if any(v not in (0, 1) for v in row):
                raise ValueError("label values must be 0 or 1")

    def __len__(self):
        return len(self.asset_ids)

    def row(self, asset_id: str) -> tuple:
        return self.values[self.asset_ids.index(asset_id)]

    def as_array(self) -> np.ndarray:
        """(n_assets, n_labels) int array."""
        return np.array(self.values, dtype=np.int64).reshape(len(self), len(self.label_names))


def read_labels_csv(data: bytes) -> LabelTable:
    text = data.decode("utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise FormatError("empty label CSV")
    header = lines[0].split(",")
    if header[0] != "asset_id" or len(header) < 2:
        raise FormatError("label CSV header must be asset_id,<label1>,...")
    names = tuple(header[1:])
    ids, rows = [], []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} cells, got {len(cells)}")
        aid = cells[0]
        if not _ASSET_ID.match(aid):
            raise FormatError(f"line {lineno}: invalid asset_id {aid!r}")
        if aid in seen:
            raise FormatError(f"line {lineno}: duplicate asset_id {aid!r}")
        seen.add(aid)
        if any(c not in ("0", "1") for c in cells[1:]):
            raise FormatError(f"line {lineno}: label cells must be 0 or 1")
        ids.append(aid)
        rows.append(tuple(int(c) for c in cells[1:]))
    return LabelTable(names, tuple(ids), tuple(rows))


def write_labels_csv(table: LabelTable) -> bytes:
    out = [",".join(("asset_id",) + tuple(table.label_names))]
    for aid, row in zip(table.asset_ids, table.values):
        out.append(",".join([aid] + [str(v) for v in row]))
    return ("\n".join(out) + "\n").encode("utf-8")
