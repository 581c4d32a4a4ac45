"""Batch augmentation: random-resized crop plus horizontal flip."""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigurationError

RECIPES = ("none", "fgvc")
FGVC_SCALE = (0.2, 1.0)
FGVC_RATIO = (3.0 / 4.0, 4.0 / 3.0)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C, H, W) array with half-pixel centres.

    Same-size resizes sample exactly on the source grid, so they are the identity.
    """
    c, h, w = img.shape

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (src - lo).astype(img.dtype)

    y0, y1, fy = axis(h, out_h)
    x0, x1, fx = axis(w, out_w)
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bot = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return (top * (1 - fy)[:, None] + bot * fy[:, None]).astype(img.dtype)


def crop_box(h: int, w: int, scale: float, ratio: float, rng: np.random.Generator) -> Tuple[int, int, int, int]:
    """(top, left, height, width) of a crop with the given area fraction and aspect."""
    area = scale * h * w
    cw = int(round(math.sqrt(area * ratio)))
    ch = int(round(math.sqrt(area / ratio)))
    cw, ch = min(max(cw, 1), w), min(max(ch, 1), h)
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    return top, left, ch, cw


def random_resized_crop(
    img: np.ndarray,
    rng: np.random.Generator,
    scale: Tuple[float, float] = FGVC_SCALE,
    ratio: Tuple[float, float] = FGVC_RATIO,
    force_scale: Optional[float] = None,
    force_ratio: Optional[float] = None,
) -> np.ndarray:
    _, h, w = img.shape
    s = force_scale if force_scale is not None else rng.uniform(*scale)
    r = force_ratio if force_ratio is not None else math.exp(rng.uniform(math.log(ratio[0]), math.log(ratio[1])))
    top, left, ch, cw = crop_box(h, w, s, r, rng)
    return resize_bilinear(img[:, top : top + ch, left : left + cw], h, w)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[..., ::-1].copy()


def augment(
    batch: np.ndarray,
    recipe: str = "none",
    rng: Optional[np.random.Generator] = None,
    flip_p: float = 0.5,
    force_scale: Optional[float] = None,
    force_ratio: Optional[float] = None,
) -> np.ndarray:
    """Apply ``recipe`` per sample to an (N, C, H, W) batch; shape is preserved."""
    if recipe not in RECIPES:
        raise ConfigurationError(f"unknown augmentation recipe {recipe!r}; expected one of {RECIPES}")
    if recipe == "none":
        return batch
    rng = rng if rng is not None else np.random.default_rng(0)
    out = np.empty_like(batch)
    for i, img in enumerate(batch):
        img = random_resized_crop(img, rng, force_scale=force_scale, force_ratio=force_ratio)
        if rng.random() < flip_p:
            img = hflip(img)
        out[i] = img
    return out
