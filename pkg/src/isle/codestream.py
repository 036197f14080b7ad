"""The ``.islc`` resolution-scalable codestream.

Layout (all multi-byte integers big-endian)::

    header   18 bytes  magic "ISLC" | version u8 | width u32 | height u32 |
                       bit_depth u8 | alpha u16 | n_levels u8 | present_segments u8
    index    (n_levels + 1) x 16 bytes, (offset u64, length u64) per segment
    payload  the first ``present_segments`` segments, back to back

Segment 0 carries the coarsest LL band; segment k (1..N) carries the
HL, LH, HH bands of level N - k + 1, so every prefix of the payload
reconstructs one rung of the resolution ladder.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from .image_io import Image
from .wavelet import DetailGroup, Pyramid, Subband, forward_2d, inverse_2d, level_dims

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER_SIZE",
    "INDEX_ENTRY_SIZE",
    "CodestreamError",
    "TruncatedStreamError",
    "SegmentUnavailableError",
    "PlanError",
    "DecompositionPlan",
    "CodestreamHeader",
    "Codestream",
    "plan_decompositions",
    "entropy_encode",
    "entropy_decode",
    "encode",
    "serialize",
    "parse",
    "parse_header",
    "truncate",
    "decode_partial",
    "decode_coefficients",
    "segment_sizes",
]

MAGIC = b"ISLC"
VERSION = 1
_HEADER = struct.Struct(">4sBIIBHBB")
HEADER_SIZE = _HEADER.size  # 18
_ENTRY = struct.Struct(">QQ")
INDEX_ENTRY_SIZE = _ENTRY.size  # 16
DEFAULT_ALPHA = 32

_MAX_VARINT_BYTES = 10


class CodestreamError(ValueError):
    """Malformed or inconsistent codestream."""


class TruncatedStreamError(CodestreamError):
    """Payload ends before a declared segment does."""


class SegmentUnavailableError(CodestreamError):
    """A decode asked for more segments than the stream carries."""


class PlanError(ValueError):
    """Image too small for any decomposition at the requested alpha."""


# -- decomposition plan ------------------------------------------------------


@dataclass(frozen=True)
class DecompositionPlan:
    width: int
    height: int
    alpha: int
    n_levels: int
    ladder: Tuple[Tuple[int, int, int], ...]  # (d, width_d, height_d), d = 0..N

    def dims(self, d: int) -> Tuple[int, int]:
        _, w, h = self.ladder[d]
        return w, h

    def min_dim(self, d: int) -> int:
        return min(self.dims(d))


def plan_decompositions(width: int, height: int, alpha: int = DEFAULT_ALPHA) -> DecompositionPlan:
    """N = floor(log2(min(X, Y) / alpha)), evaluated in exact integer arithmetic."""
    if alpha < 1:
        raise PlanError(f"alpha must be >= 1, got {alpha}")
    if width < 1 or height < 1:
        raise PlanError("image dimensions must be positive")
    # floor(log2(m / a)) == floor(log2(m // a)) for integers m, a
    ratio = min(width, height) // alpha
    n = ratio.bit_length() - 1
    if n < 1:
        raise PlanError(
            f"{width}x{height} is too small for alpha={alpha}: need min dimension >= {2 * alpha}"
        )
    dims = level_dims(width, height, n)
    ladder = tuple((d, *dims[n - d]) for d in range(n + 1))
    return DecompositionPlan(width, height, alpha, n, ladder)


# -- entropy coding ----------------------------------------------------------


def _varints(values: np.ndarray) -> bytes:
    """Little-endian base-128 encoding of non-negative int64 values."""
    values = np.asarray(values, dtype=np.uint64)
    if values.size == 0:
        return b""
    nbytes = np.ones(values.shape, dtype=np.int64)
    v = values >> np.uint64(7)
    while np.any(v):
        nbytes += v > 0
        v = v >> np.uint64(7)
    total = int(nbytes.sum())
    starts = np.concatenate([[0], np.cumsum(nbytes)[:-1]])
    owner = np.repeat(np.arange(values.size), nbytes)
    pos = np.arange(total) - starts[owner]
    chunk = (values[owner] >> (np.uint64(7) * pos.astype(np.uint64))) & np.uint64(0x7F)
    last = pos == nbytes[owner] - 1
    out = chunk.astype(np.uint8) | np.where(last, 0, 0x80).astype(np.uint8)
    return out.tobytes()


def _read_varints(data: bytes) -> np.ndarray:
    b = np.frombuffer(data, dtype=np.uint8)
    if b.size == 0:
        return np.zeros(0, dtype=np.int64)
    if b[-1] & 0x80:
        raise CodestreamError("truncated varint at end of segment")
    ends = np.flatnonzero((b & 0x80) == 0)
    starts = np.concatenate([[0], ends[:-1] + 1])
    lengths = ends - starts + 1
    if lengths.max() > _MAX_VARINT_BYTES:
        raise CodestreamError("varint longer than 10 bytes")
    owner = np.repeat(np.arange(ends.size), lengths)
    pos = np.arange(b.size) - starts[owner]
    parts = (b & 0x7F).astype(np.uint64) << (np.uint64(7) * pos.astype(np.uint64))
    vals = np.add.reduceat(parts, starts)
    if np.any(vals > np.uint64(np.iinfo(np.int64).max)):
        raise CodestreamError("varint value out of range")
    return vals.astype(np.int64)


def entropy_encode(coeffs) -> bytes:
    """Zigzag literals for nonzero values, (0, run) token pairs for zero runs."""
    c = np.asarray(coeffs, dtype=np.int64).ravel()
    if c.size == 0:
        return b""
    zero = c == 0
    # boundaries between zero / nonzero stretches
    change = np.flatnonzero(zero[1:] != zero[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [c.size]])
    run_is_zero = zero[starts]

    # each nonzero stretch emits one token per value; each zero stretch emits two
    per_run = np.where(run_is_zero, 2, ends - starts)
    tokens = np.empty(int(per_run.sum()), dtype=np.int64)
    tok_start = np.concatenate([[0], np.cumsum(per_run)[:-1]])

    nz = ~zero
    zz = np.where(c >= 0, 2 * c, -2 * c - 1) + 1
    lit_slots = np.ones(tokens.size, dtype=bool)
    zs = tok_start[run_is_zero]
    lit_slots[zs] = False
    lit_slots[zs + 1] = False
    tokens[lit_slots] = zz[nz]
    tokens[zs] = 0
    tokens[zs + 1] = (ends - starts)[run_is_zero]
    return _varints(tokens)


def entropy_decode(data: bytes, expected_count: int) -> np.ndarray:
    """Inverse of :func:`entropy_encode`; returns exactly ``expected_count`` int64 values."""
    tokens = _read_varints(bytes(data))
    marker = tokens == 0
    if marker.size and marker[-1]:
        raise CodestreamError("zero-run marker without run length")
    run_pos = np.flatnonzero(marker) + 1
    if run_pos.size and np.any(marker[run_pos]):
        raise CodestreamError("zero-length run")
    is_run = np.zeros(tokens.size, dtype=bool)
    is_run[run_pos] = True
    emit = ~marker
    counts = np.where(is_run, tokens, 1)[emit]
    total = int(counts.sum()) if counts.size else 0
    if total != expected_count:
        if total > expected_count:
            raise CodestreamError(
                f"token stream decodes to {total} coefficients, more than the expected {expected_count}"
            )
        raise CodestreamError(
            f"token stream decodes to {total} coefficients, expected {expected_count}"
        )
    lit = tokens[emit] - 1
    lit_vals = np.where(lit & 1, -((lit + 1) >> 1), lit >> 1)
    lit_vals = np.where(is_run[emit], 0, lit_vals)
    return np.repeat(lit_vals, counts)


# -- container ---------------------------------------------------------------


@dataclass(frozen=True)
class CodestreamHeader:
    width: int
    height: int
    bit_depth: int
    alpha: int
    n_levels: int
    present_segments: int
    magic: bytes = MAGIC
    version: int = VERSION

    def pack(self) -> bytes:
        return _HEADER.pack(
            self.magic, self.version, self.width, self.height, self.bit_depth,
            self.alpha, self.n_levels, self.present_segments,
        )


@dataclass(frozen=True)
class Codestream:
    header: CodestreamHeader
    index: Tuple[Tuple[int, int], ...]  # (offset, length) for all n_levels + 1 segments
    payload: bytes

    @property
    def n_levels(self) -> int:
        return self.header.n_levels

    @property
    def present_segments(self) -> int:
        return self.header.present_segments

    @property
    def plan(self) -> DecompositionPlan:
        h = self.header
        return plan_decompositions(h.width, h.height, h.alpha)

    def prefix_size(self, d: int) -> int:
        """Payload bytes needed to decode decomposition ``d``."""
        off, length = self.index[d]
        return off + length

    def segment(self, k: int) -> bytes:
        if k >= self.present_segments:
            raise SegmentUnavailableError(
                f"segment {k} not present (stream carries {self.present_segments})"
            )
        off, length = self.index[k]
        return self.payload[off:off + length]


def _band_shapes(width: int, height: int, n_levels: int):
    """Shapes (h, w) of LL_N and of HL/LH/HH per level, indexed by level."""
    dims = level_dims(width, height, n_levels)
    bands = {}
    for lvl in range(1, n_levels + 1):
        pw, ph = dims[lvl - 1]
        lw, lh_ = dims[lvl]
        bands[lvl] = ((lh_, pw - lw), (ph - lh_, lw), (ph - lh_, pw - lw))
    w, h = dims[n_levels]
    return (h, w), bands


def encode(img: Image, alpha: int = DEFAULT_ALPHA) -> Codestream:
    plan = plan_decompositions(img.width, img.height, alpha)
    n = plan.n_levels
    pyr = forward_2d(img, n)
    segments = [entropy_encode(pyr.base_ll.coeffs)]
    for lvl in range(n, 0, -1):
        group = pyr.details[lvl - 1]
        segments.append(entropy_encode(np.concatenate([b.coeffs.ravel() for b in group.bands])))
    index = []
    off = 0
    for seg in segments:
        index.append((off, len(seg)))
        off += len(seg)
    header = CodestreamHeader(img.width, img.height, img.bit_depth, alpha, n, n + 1)
    return Codestream(header, tuple(index), b"".join(segments))


def serialize(cs: Codestream) -> bytes:
    index = b"".join(_ENTRY.pack(o, ln) for o, ln in cs.index)
    return cs.header.pack() + index + cs.payload


def segment_sizes(cs: Codestream) -> List[int]:
    return [ln for _, ln in cs.index]


def parse_header(data: bytes) -> Tuple[CodestreamHeader, Tuple[Tuple[int, int], ...]]:
    """Validate and decode the header and full segment index."""
    if len(data) < HEADER_SIZE:
        raise TruncatedStreamError(f"stream shorter than the {HEADER_SIZE}-byte header")
    magic, version, width, height, depth, alpha, n_levels, present = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CodestreamError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CodestreamError(f"unsupported version {version}")
    if depth not in (8, 16):
        raise CodestreamError(f"unsupported bit depth {depth}")
    if n_levels < 1:
        raise CodestreamError("n_levels must be >= 1")
    if not 1 <= present <= n_levels + 1:
        raise CodestreamError(f"present_segments {present} outside 1..{n_levels + 1}")
    try:
        plan = plan_decompositions(width, height, alpha)
    except PlanError as exc:
        raise CodestreamError(str(exc)) from None
    if plan.n_levels != n_levels:
        raise CodestreamError(
            f"n_levels {n_levels} inconsistent with {width}x{height} at alpha={alpha} (expected {plan.n_levels})"
        )
    header = CodestreamHeader(width, height, depth, alpha, n_levels, present)

    index_end = HEADER_SIZE + (n_levels + 1) * INDEX_ENTRY_SIZE
    if len(data) < index_end:
        raise TruncatedStreamError("segment index is incomplete")
    index = tuple(
        _ENTRY.unpack_from(data, HEADER_SIZE + k * INDEX_ENTRY_SIZE) for k in range(n_levels + 1)
    )
    expected = 0
    for k, (off, length) in enumerate(index):
        if off != expected:
            raise CodestreamError(f"segment index not contiguous at segment {k}")
        expected = off + length
    return header, index


def parse(data: bytes) -> Codestream:
    data = bytes(data)
    header, index = parse_header(data)
    start = HEADER_SIZE + (header.n_levels + 1) * INDEX_ENTRY_SIZE
    payload = data[start:]
    declared = sum(ln for _, ln in index[:header.present_segments])
    if len(payload) < declared:
        for k in range(header.present_segments):
            off, length = index[k]
            if len(payload) < off + length:
                raise TruncatedStreamError(
                    f"payload ends inside segment {k}: have {len(payload)} bytes, "
                    f"segment {k} ends at {off + length}"
                )
    if len(payload) > declared:
        raise CodestreamError(
            f"{len(payload) - declared} trailing bytes after the declared payload"
        )
    return Codestream(header, index, payload)


def truncate(cs: Codestream, d: int) -> Codestream:
    """Keep segments 0..d; the index keeps describing the whole stream."""
    if not 0 <= d <= cs.n_levels:
        raise SegmentUnavailableError(f"decomposition {d} outside 0..{cs.n_levels}")
    if d + 1 > cs.present_segments:
        raise SegmentUnavailableError(
            f"decomposition {d} needs {d + 1} segments, stream carries {cs.present_segments}"
        )
    end = cs.prefix_size(d)
    return Codestream(replace(cs.header, present_segments=d + 1), cs.index, cs.payload[:end])


def decode_coefficients(cs: Codestream, d: int) -> np.ndarray:
    """Unclamped LL grid for decomposition ``d`` (ladder entry ``d``)."""
    h = cs.header
    if not 0 <= d <= h.n_levels:
        raise SegmentUnavailableError(f"decomposition {d} outside 0..{h.n_levels}")
    if d > h.present_segments - 1:
        raise SegmentUnavailableError(
            f"decomposition {d} needs {d + 1} segments, stream carries {h.present_segments}"
        )
    n = h.n_levels
    ll_shape, bands = _band_shapes(h.width, h.height, n)
    base = entropy_decode(cs.segment(0), ll_shape[0] * ll_shape[1]).reshape(ll_shape)
    details: List = [None] * n
    for k in range(1, d + 1):
        lvl = n - k + 1
        shapes = bands[lvl]
        sizes = [a * b for a, b in shapes]
        flat = entropy_decode(cs.segment(k), sum(sizes))
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        hl, lh, hh = (
            Subband(kind, lvl, p.reshape(s)) for kind, p, s in zip(("HL", "LH", "HH"), parts, shapes)
        )
        details[lvl - 1] = DetailGroup(lvl, hl, lh, hh)
    pyr = Pyramid(n, Subband("LL", n, base), details)
    return inverse_2d(pyr, d)


def decode_partial(cs: Codestream, d: int) -> Image:
    """Decode decomposition ``d``, clamping samples into the source bit depth."""
    coeffs = decode_coefficients(cs, d)
    maxval = (1 << cs.header.bit_depth) - 1
    return Image.from_array(np.clip(coeffs, 0, maxval), cs.header.bit_depth)
