"""Pluggable image scorers: a seeded linear probe and precomputed score tables."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .image_io import FormatError, Image
from .synthetic import label_geometry, render_blob

__all__ = [
    "ScorerSpec",
    "ScoreMatrix",
    "MissingScoreError",
    "area_resize",
    "to_model_input",
    "score",
    "read_scores_csv",
    "write_scores_csv",
]

_ASSET_ID = re.compile(r"^[A-Za-z0-9_.-]+$")
_HEAD_GAIN = 12.0
_HEAD_OFFSET = -2.0


class MissingScoreError(KeyError):
    """No precomputed row for the requested (asset_id, d)."""


@dataclass(frozen=True)
class ScorerSpec:
    """``kind`` is ``linear_probe`` (params: seed, n_labels) or
    ``precomputed`` (params: path, or an in-memory ``scores`` ScoreMatrix)."""

    kind: str
    input_size: int
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("linear_probe", "precomputed"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.input_size < 1:
            raise ValueError("input_size must be >= 1")

    @property
    def needs_pixels(self) -> bool:
        return self.kind == "linear_probe"


@dataclass(frozen=True)
class ScoreMatrix:
    """Precomputed per-label scores keyed by (asset_id, d)."""

    label_names: Tuple[str, ...]
    rows: Dict[Tuple[str, int], Tuple[float, ...]]

    def lookup(self, asset_id: str, d: int) -> np.ndarray:
        try:
            return np.asarray(self.rows[(asset_id, d)], dtype=np.float64)
        except KeyError:
            raise MissingScoreError(f"no precomputed scores for asset {asset_id!r} at d={d}") from None


def read_scores_csv(data: bytes) -> ScoreMatrix:
    lines = [ln for ln in data.decode("utf-8").split("\n") if ln]
    if not lines:
        raise FormatError("empty scores CSV")
    header = lines[0].split(",")
    if header[:2] != ["asset_id", "d"] or len(header) < 3:
        raise FormatError("scores CSV header must be asset_id,d,<label1>,...")
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise FormatError(f"line {lineno}: expected {len(header)} cells")
        if not _ASSET_ID.match(cells[0]):
            raise FormatError(f"line {lineno}: invalid asset_id {cells[0]!r}")
        try:
            key = (cells[0], int(cells[1]))
            vals = tuple(float(c) for c in cells[2:])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric cell") from None
        if key in rows:
            raise FormatError(f"line {lineno}: duplicate row for {key}")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise FormatError(f"line {lineno}: scores must lie in [0, 1]")
        rows[key] = vals
    return ScoreMatrix(tuple(header[2:]), rows)


def write_scores_csv(matrix: ScoreMatrix) -> bytes:
    out = [",".join(("asset_id", "d") + matrix.label_names)]
    for (aid, d), vals in sorted(matrix.rows.items()):
        out.append(",".join([aid, str(d)] + [repr(float(v)) for v in vals]))
    return ("\n".join(out) + "\n").encode("utf-8")


@lru_cache(maxsize=64)
def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) weights; row i averages the input span [i, i+1) * n_in / n_out."""
    scale = n_in / n_out
    lo = np.arange(n_out)[:, None] * scale
    hi = lo + scale
    j = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, j + 1) - np.maximum(lo, j), 0.0, None)
    m = overlap / scale
    m.flags.writeable = False
    return m


def area_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    return _area_matrix(a.shape[0], out_h) @ a @ _area_matrix(a.shape[1], out_w).T


def to_model_input(img: Image, input_size: int) -> np.ndarray:
    """Area-average to fit ``input_size`` on the long side, then zero-pad to a centred square.

    Samples are normalized to [0, 1].
    """
    long_side = max(img.width, img.height)
    out_w = max(1, round(img.width * input_size / long_side))
    out_h = max(1, round(img.height * input_size / long_side))
    small = area_resize(img.pixels, out_h, out_w) / img.maxval
    canvas = np.zeros((input_size, input_size))
    top = (input_size - out_h) // 2
    left = (input_size - out_w) // 2
    canvas[top:top + out_h, left:left + out_w] = small
    return canvas


@lru_cache(maxsize=16)
def _linear_heads(seed: int, n_labels: int, input_size: int):
    """Weights (n_labels, input_size**2) and biases for the seeded probe.

    Each head is a zero-sum matched filter for its label's blob: the
    box-integrated blob template minus its mean over a local disc.
    """
    geometry = label_geometry(n_labels, seed)
    rng = np.random.default_rng([seed, input_size, 0xB1A5])
    coords = np.arange(input_size) + 0.5
    weights = np.zeros((n_labels, input_size * input_size))
    for k, g in enumerate(geometry):
        template = render_blob(g, input_size, supersample=8)
        radius = max(3.0 * g.sigma * input_size, 1.5) + 1.0
        dist = np.hypot(coords[:, None] - g.cy * input_size, coords[None, :] - g.cx * input_size)
        disc = dist <= radius
        w = np.where(disc, template, 0.0)
        w[disc] -= w[disc].mean()
        w /= float(np.sum(w * template))
        weights[k] = w.ravel()
    biases = _HEAD_OFFSET + rng.normal(0.0, 0.1, size=n_labels)
    weights.flags.writeable = False
    biases.flags.writeable = False
    return weights, biases


def score(spec: ScorerSpec, img: Optional[Image], asset_id: Optional[str] = None,
          d: Optional[int] = None) -> np.ndarray:
    """Per-label scores in [0, 1]."""
    if spec.kind == "precomputed":
        matrix = spec.params.get("scores")
        if matrix is None:
            matrix = _load_scores(str(spec.params["path"]))
        if asset_id is None or d is None:
            raise ValueError("precomputed scorer needs asset_id and d")
        return matrix.lookup(asset_id, d)

    if img is None:
        raise ValueError("linear_probe needs pixels")
    weights, biases = _linear_heads(
        int(spec.params.get("seed", 0)), int(spec.params.get("n_labels", 1)), spec.input_size
    )
    x = to_model_input(img, spec.input_size).ravel()
    z = _HEAD_GAIN * (weights @ x) + biases
    return 1.0 / (1.0 + np.exp(-z))


@lru_cache(maxsize=8)
def _load_scores(path: str) -> ScoreMatrix:
    return read_scores_csv(Path(path).read_bytes())
