"""Seeded synthetic corpus with a resolution/performance trade-off.

Each label is a Gaussian blob at a fixed, label-specific location whose
width shrinks with the label index, so high-index labels lose most at
coarse resolutions.  Backgrounds carry a smooth gradient, weak 1/f clutter
and strong white (quantum-like) noise; the white noise is what separates
coarse wavelet approximations from area-averaged full-resolution input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .image_io import Image, LabelTable

__all__ = ["LabelGeometry", "label_geometry", "make_synthetic_corpus", "render_blob"]

SIGMA_COARSE = 0.05
SIGMA_FINE = 0.010
POSITIVE_RATE = 0.5
AMPLITUDE = 2.5
AMPLITUDE_EXPONENT = 0.8
PINK_NOISE = 0.5
WHITE_NOISE = 40.0


@dataclass(frozen=True)
class LabelGeometry:
    """Blob centre and width as fractions of the image side."""

    cx: float
    cy: float
    sigma: float
    amplitude: float  # in gray levels at 8 bits


def label_geometry(n_labels: int, seed: int) -> Tuple[LabelGeometry, ...]:
    if n_labels < 1:
        raise ValueError("n_labels must be >= 1")
    rng = np.random.default_rng([seed, 0x15E])
    if n_labels == 1:
        sigmas = np.array([SIGMA_COARSE])
    else:
        sigmas = SIGMA_COARSE * (SIGMA_FINE / SIGMA_COARSE) ** (np.arange(n_labels) / (n_labels - 1))
    centres: List[Tuple[float, float]] = []
    while len(centres) < n_labels:
        c = rng.uniform(0.2, 0.8, size=2)
        if all(np.hypot(c[0] - x, c[1] - y) > 0.12 for x, y in centres):
            centres.append((float(c[0]), float(c[1])))
    # finer blobs are brighter so that all labels are separable at full size
    amps = AMPLITUDE * (SIGMA_COARSE / sigmas) ** AMPLITUDE_EXPONENT
    return tuple(
        LabelGeometry(cx, cy, float(s), float(a)) for (cx, cy), s, a in zip(centres, sigmas, amps)
    )


def render_blob(geom: LabelGeometry, size: int, supersample: int = 1) -> np.ndarray:
    """Unit-amplitude blob on a size x size grid, box-integrated over ``supersample``^2 points."""
    n = size * supersample
    coords = (np.arange(n) + 0.5) / n
    gx = np.exp(-0.5 * ((coords - geom.cx) / geom.sigma) ** 2)
    gy = np.exp(-0.5 * ((coords - geom.cy) / geom.sigma) ** 2)
    blob = np.outer(gy, gx)
    if supersample > 1:
        blob = blob.reshape(size, supersample, size, supersample).mean(axis=(1, 3))
    return blob


def _pink_noise(rng, size: int, exponent: float = 1.0) -> np.ndarray:
    f = np.fft.fftfreq(size)
    radius = np.hypot(*np.meshgrid(f, f, indexing="ij"))
    radius[0, 0] = 1.0
    spectrum = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size)))
    spectrum /= radius ** exponent
    spectrum[0, 0] = 0.0
    field = np.fft.ifft2(spectrum).real
    return field / field.std()


def make_synthetic_corpus(n: int, size: int, n_labels: int, seed: int):
    """Return (images, LabelTable); images are 8-bit ``size`` x ``size``.

    Asset ids are ``syn0000``, ``syn0001``, ... (at least four digits).
    """
    if size < 64:
        raise ValueError("size must be >= 64")
    if n < 20:
        raise ValueError("n must be >= 20")
    geometry = label_geometry(n_labels, seed)
    rng = np.random.default_rng([seed, n, size, n_labels])
    width = len(str(max(n - 1, 9999)))
    coords = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    blobs = [render_blob(g, size, supersample=4 if g.sigma * size < 2 else 1) for g in geometry]

    images, ids, rows = [], [], []
    for i in range(n):
        present = (rng.random(n_labels) < POSITIVE_RATE).astype(int)
        theta = rng.uniform(0, 2 * np.pi)
        base = 96.0 + 40.0 * (np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5))
        base -= 30.0 * ((xx - 0.5) ** 2 + (yy - 0.5) ** 2)
        base += PINK_NOISE * _pink_noise(rng, size)
        base += rng.normal(0.0, WHITE_NOISE, size=(size, size))
        for blob, g, on in zip(blobs, geometry, present):
            if on:
                base += g.amplitude * rng.uniform(0.6, 1.4) * blob
        px = np.clip(np.rint(base), 0, 255).astype(np.uint8)
        images.append(Image.from_array(px, 8))
        ids.append(f"syn{i:0{width}d}")
        rows.append(tuple(int(v) for v in present))
    names = tuple(f"label{k}" for k in range(n_labels))
    return images, LabelTable(names, tuple(ids), tuple(rows))
