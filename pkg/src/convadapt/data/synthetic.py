"""Synthetic image-classification tasks for desk-scale transfer experiments.

Each generator is a pure function of its arguments. ``shift`` in [0, 1] moves
the task away from its ``shift=0`` family so a backbone pre-trained on one
family can be adapted to another.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError
from .dataset import Dataset

KINDS = ("texture", "counting", "orientation")


def _to_u8(x: np.ndarray, lo: float = -3.0, hi: float = 3.0) -> np.ndarray:
    return np.clip(np.round((x - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def texture_angles(classes: int, shift: float) -> np.ndarray:
    """Class orientations; a full shift rotates every class half-way to its neighbour."""
    return (np.arange(classes) + 0.5 * shift) * math.pi / classes


def texture_frequency(shift: float, base: float = 0.18, span: float = 0.14) -> float:
    return base + span * shift


def _texture(classes, n, size, rng, shift, bandwidth=0.035, channels=3):
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    angles = texture_angles(classes, shift)
    freq = texture_frequency(shift)
    filters = []
    for th in angles:
        cy, cx = freq * math.sin(th), freq * math.cos(th)
        bump = np.exp(-((fy - cy) ** 2 + (fx - cx) ** 2) / (2 * bandwidth**2))
        bump += np.exp(-((fy + cy) ** 2 + (fx + cx) ** 2) / (2 * bandwidth**2))
        filters.append(bump)
    filters = np.stack(filters)
    labels = np.repeat(np.arange(classes), n)
    noise = rng.standard_normal((len(labels), channels, size, size))
    spec = np.fft.fft2(noise) * filters[labels][:, None]
    img = np.real(np.fft.ifft2(spec))
    img -= img.mean(axis=(2, 3), keepdims=True)
    img /= img.std(axis=(2, 3), keepdims=True) + 1e-12
    gain = rng.uniform(0.7, 1.0, size=(len(labels), channels, 1, 1))
    return _to_u8(img * gain), labels


def place_centres(k, size, rng, radius, min_gap):
    """``k`` blob centres at least ``min_gap`` apart (rejection sampling, relaxed after 2000 tries)."""
    centres = []
    tries = 0
    while len(centres) < k:
        tries += 1
        c = rng.uniform(radius, size - 1 - radius, size=2)
        if all(np.hypot(*(c - d)) >= min_gap for d in centres) or tries > 2000:
            centres.append(c)
    return centres


def _blobs(counts, size, rng, radius, contrast, noise, offset, channels=3, min_gap=None):
    xs = np.arange(size)
    yy, xx = np.meshgrid(xs, xs, indexing="ij")
    min_gap = min_gap if min_gap is not None else 2.5 * radius
    out = np.empty((len(counts), channels, size, size))
    for i, k in enumerate(counts):
        canvas = np.zeros((size, size))
        for cy, cx in place_centres(k, size, rng, radius, min_gap):
            canvas += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius**2))
        canvas = np.minimum(canvas, 1.0)
        bg = rng.uniform(-offset, offset)
        out[i] = canvas[None] * 2.0 * contrast - 1.0 + bg + noise * rng.standard_normal((channels, size, size))
    return out


def counting_style(shift: float) -> dict:
    """Blob radius, contrast, pixel noise and background jitter for a given shift."""
    return {
        "radius": 1.0 + 0.8 * shift,
        "contrast": 1.0 - 0.5 * shift,
        "noise": 0.08 + 0.32 * shift,
        "offset": 0.6 * shift,
    }


def _counting(classes, n, size, rng, shift, channels=3):
    labels = np.repeat(np.arange(classes), n)
    img = _blobs(labels, size, rng, channels=channels, **counting_style(shift))
    return _to_u8(img, -2.0, 2.0), labels


def _orientation(classes, n, size, rng, shift, channels=3):
    labels = np.repeat(np.arange(classes), n)
    xs = np.arange(size) - (size - 1) / 2
    yy, xx = np.meshgrid(xs, xs, indexing="ij")
    width = 0.9 + 0.6 * shift
    out = np.empty((len(labels), channels, size, size))
    for i, lab in enumerate(labels):
        th = (lab + 0.5 * shift) * math.pi / classes + rng.normal(0, 0.04)
        oy, ox = rng.uniform(-size / 6, size / 6, size=2)
        d = np.abs((yy - oy) * math.cos(th) - (xx - ox) * math.sin(th))
        along = np.abs((yy - oy) * math.sin(th) + (xx - ox) * math.cos(th))
        bar = np.exp(-(d**2) / (2 * width**2)) * (along < size * 0.4)
        out[i] = bar[None] * 3.0 - 1.5 + 0.15 * rng.standard_normal((channels, size, size))
    return _to_u8(out, -2.0, 2.0), labels


def make_synthetic_task(
    kind: str,
    classes: int,
    samples_per_class: int,
    image_size: int = 16,
    seed: int = 0,
    shift: float = 0.0,
    channels: int = 3,
) -> Dataset:
    """Balanced dataset of ``classes × samples_per_class`` images, all tagged ``train``.

    texture: band-pass filtered noise, class = dominant orientation.
    counting: Gaussian blobs, label = number of blobs (0 .. classes-1).
    orientation: a single bar, class = its angle.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown synthetic task {kind!r}; expected one of {KINDS}")
    if classes < 2 or samples_per_class < 1 or image_size < 4:
        raise ConfigurationError("need at least 2 classes, 1 sample per class and 4-pixel images")
    if not 0.0 <= shift <= 1.0:
        raise ConfigurationError(f"shift must lie in [0, 1], got {shift}")
    rng = np.random.default_rng(seed)
    gen = {"texture": _texture, "counting": _counting, "orientation": _orientation}[kind]
    pixels, labels = gen(classes, samples_per_class, image_size, rng, shift, channels=channels)
    return Dataset(pixels, labels, classes)
