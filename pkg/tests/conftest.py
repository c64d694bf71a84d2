"""Shared fixtures: small synthetic photo-like images on disk."""

import numpy as np
import pytest
from scipy.ndimage import zoom

from maskdenoise.imageio import save_image


def toy_image(seed: int, size: int = 96) -> np.ndarray:
    """Smooth random field: coarse noise upsampled with a cubic kernel."""
    rng = np.random.default_rng(seed)
    coarse = rng.random((6, 6, 3))
    img = zoom(coarse, (size / 6, size / 6, 1), order=3)
    return np.clip(img, 0.0, 1.0)


def write_toy_dataset(root, count: int, size: int = 96, seed0: int = 0):
    root.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        save_image(toy_image(seed0 + i, size), root / f"img_{i:03d}.png")
    return root


def textured_image(seed: int, size: int = 96) -> np.ndarray:
    """Toy image plus a finer luminance layer; harder to denoise blindly."""
    rng = np.random.default_rng(seed)
    base = zoom(rng.random((6, 6, 3)), (size / 6, size / 6, 1), order=3)
    fine = zoom(rng.random((24, 24, 1)) - 0.5, (size / 24, size / 24, 1), order=3)
    return np.clip(base + 0.35 * fine, 0.0, 1.0)


def write_textured_dataset(root, count: int, size: int = 96, seed0: int = 0):
    root.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        save_image(textured_image(seed0 + i, size), root / f"img_{i:03d}.png")
    return root


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Four 96x96 PNGs, enough for fast training-loop tests."""
    return write_toy_dataset(tmp_path_factory.mktemp("toyset"), count=4)
