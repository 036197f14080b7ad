"""Reversible 5/3 integer lifting, 1-D and separable multi-level 2-D.

Conventions: even-indexed samples form the approximation (ceil split), the
boundary uses whole-sample symmetric extension, and all arithmetic is exact
integer floor division.  Level 1 is the finest decomposition level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .image_io import Image

__all__ = [
    "Subband",
    "DetailGroup",
    "Pyramid",
    "forward_1d",
    "inverse_1d",
    "forward_2d",
    "inverse_2d",
    "level_dims",
]


def _lift_forward(x: np.ndarray):
    """Lifting along the last axis. ``x`` must be int64."""
    n = x.shape[-1]
    even = x[..., 0::2]
    odd = x[..., 1::2]
    if n == 1:
        return even.copy(), odd.copy()
    # right neighbour x[2i+2]; past the end it mirrors to x[2i]
    if n % 2:
        even_right = even[..., 1:]
    else:
        even_right = np.concatenate([even[..., 1:], even[..., -1:]], axis=-1)
    detail = odd - ((even[..., :odd.shape[-1]] + even_right) >> 1)
    m = even.shape[-1]
    d_left = np.concatenate([detail[..., :1], detail], axis=-1)[..., :m]
    d_right = np.concatenate([detail, detail[..., -1:]], axis=-1)[..., :m]
    approx = even + ((d_left + d_right + 2) >> 2)
    return approx, detail


def _lift_inverse(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    m = approx.shape[-1]
    k = detail.shape[-1]
    if k not in (m, m - 1):
        raise ValueError(f"incompatible lengths: approx {m}, detail {k}")
    if k == 0:
        return approx.copy()
    d_left = np.concatenate([detail[..., :1], detail], axis=-1)[..., :m]
    d_right = np.concatenate([detail, detail[..., -1:]], axis=-1)[..., :m]
    even = approx - ((d_left + d_right + 2) >> 2)
    if m > k:
        even_right = even[..., 1:]
    else:
        even_right = np.concatenate([even[..., 1:], even[..., -1:]], axis=-1)
    odd = detail + ((even[..., :k] + even_right) >> 1)
    out = np.empty(approx.shape[:-1] + (m + k,), dtype=np.int64)
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def forward_1d(signal):
    """Split ``signal`` into (approx, detail) integer lists."""
    x = np.asarray(list(signal), dtype=np.int64)
    if x.size == 0:
        raise ValueError("empty signal")
    approx, detail = _lift_forward(x)
    return approx.tolist(), detail.tolist()


def inverse_1d(approx, detail):
    s = np.asarray(list(approx), dtype=np.int64)
    d = np.asarray(list(detail), dtype=np.int64)
    if s.size == 0:
        raise ValueError("empty approximation")
    return _lift_inverse(s, d).tolist()


@dataclass(frozen=True, eq=False)
class Subband:
    kind: str  # "LL", "HL", "LH" or "HH"
    level: int
    coeffs: np.ndarray  # (height, width) int64

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]

    @property
    def height(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class DetailGroup:
    level: int
    hl: Subband
    lh: Subband
    hh: Subband

    @property
    def bands(self):
        return (self.hl, self.lh, self.hh)


@dataclass(frozen=True, eq=False)
class Pyramid:
    """``details[i]`` holds level ``i + 1``; a ``None`` entry marks a group
    that was never received (partial streams)."""

    levels: int
    base_ll: Subband
    details: List[Optional[DetailGroup]]


def level_dims(width: int, height: int, levels: int):
    """Dims of the LL grid after 0..levels ceil-halvings, finest first."""
    dims = [(width, height)]
    for _ in range(levels):
        w, h = dims[-1]
        dims.append(((w + 1) // 2, (h + 1) // 2))
    return dims


def _split_2d(a: np.ndarray):
    low, high = _lift_forward(a)  # along rows
    ll, lh = (b.T for b in _lift_forward(low.T))
    hl, hh = (b.T for b in _lift_forward(high.T))
    return ll, hl, lh, hh


def _merge_2d(ll, hl, lh, hh) -> np.ndarray:
    low = _lift_inverse(ll.T, lh.T).T
    high = _lift_inverse(hl.T, hh.T).T
    return _lift_inverse(low, high)


def forward_2d(img, levels: int) -> Pyramid:
    """Multi-level transform of an Image (or 2-D integer array)."""
    a = np.asarray(img.pixels if isinstance(img, Image) else img, dtype=np.int64)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = a.shape
    for lvl, (pw, ph) in enumerate(level_dims(w, h, levels)[:-1], start=1):
        if min(pw, ph) < 2:
            raise ValueError(
                f"{levels} levels too many for a {w}x{h} image (level {lvl} input is {pw}x{ph})"
            )
    details = []
    for lvl in range(1, levels + 1):
        a, hl, lh, hh = _split_2d(a)
        details.append(
            DetailGroup(lvl, Subband("HL", lvl, hl), Subband("LH", lvl, lh), Subband("HH", lvl, hh))
        )
    return Pyramid(levels, Subband("LL", levels, a), details)


def inverse_2d(pyr: Pyramid, levels_to_apply: int) -> np.ndarray:
    """Reconstruct the LL at depth ``pyr.levels - levels_to_apply``.

    Returns an unclamped int64 array; intermediate LL samples can leave the
    source range.
    """
    if not 0 <= levels_to_apply <= pyr.levels:
        raise ValueError(f"levels_to_apply {levels_to_apply} outside 0..{pyr.levels}")
    a = pyr.base_ll.coeffs.astype(np.int64, copy=True)
    for lvl in range(pyr.levels, pyr.levels - levels_to_apply, -1):
        group = pyr.details[lvl - 1]
        if group is None:
            raise ValueError(f"detail group for level {lvl} is not available")
        a = _merge_2d(a, group.hl.coeffs, group.lh.coeffs, group.hh.coeffs)
    return a
