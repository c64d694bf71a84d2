"""Strict 8-bit RGB PNG loading and saving.

Loading maps byte v to v/255; saving maps x to floor(clip(x)*255 + 0.5),
i.e. round-half-up, so 0.5 becomes byte 128. Saving what was just loaded
reproduces every byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageFormatError(ValueError):
    """File exists but is not an 8-bit RGB PNG."""


class ImageDecodeError(ValueError):
    """File could not be parsed as an image at all."""


def load_image(path: str | Path) -> np.ndarray:
    """Read an RGB PNG into an (H, W, 3) float64 array in [0, 1]."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"image not found: {p}")
    try:
        with Image.open(p) as im:
            if im.format != "PNG":
                raise ImageFormatError(f"not a PNG file: {p} (format {im.format})")
            if im.mode != "RGB":
                raise ImageFormatError(f"not an 8-bit RGB image: {p} (mode {im.mode})")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as e:
        raise ImageDecodeError(f"cannot decode image: {p}") from e
    return arr.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path: str | Path):
    """Write an (H, W, 3) array in [0, 1] as an 8-bit RGB PNG."""
    p = Path(path)
    if not p.parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {p.parent}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    data = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(p, format="PNG")
