"""Synthetic noise generators for denoising experiments.

Unit conventions follow MATLAB's imnoise, which these generators mirror:
``sigma255`` parameters live on the 0-255 scale (divided by 255 internally),
while variance parameters (speckle, the Gaussian stage of the mixture) live
on the [0,1] scale. Every generator clips its result to [0,1], takes an
explicit ``numpy.random.Generator``, and is a pure function of
(image, parameters, rng state). A zero parameter returns the image unchanged
without consuming any random draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

# mixture recipe per level: (gauss_var, speckle_var_1, poisson_alpha,
# sp_density, speckle_var_2), applied in that order
MIXTURE_LEVELS = {
    1: (0.003, 0.003, 1.0, 0.002, 0.003),
    2: (0.004, 0.004, 1.0, 0.002, 0.004),
    3: (0.006, 0.006, 1.0, 0.003, 0.006),
    4: (0.008, 0.008, 1.0, 0.004, 0.008),
}

_POISSON_PEAK = 255.0  # 8-bit photon-count proxy


def _finish(out: np.ndarray, like: np.ndarray) -> np.ndarray:
    return np.clip(out, 0.0, 1.0).astype(like.dtype, copy=False)


def add_gaussian(img: np.ndarray, sigma255: float, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise with standard deviation ``sigma255``/255."""
    if sigma255 < 0:
        raise ValueError("sigma255 must be nonnegative")
    if sigma255 == 0:
        return img.copy()
    n = rng.normal(0.0, sigma255 / 255.0, size=img.shape)
    return _finish(img + n, img)


def add_speckle(img: np.ndarray, var: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative uniform noise: ``J = I + n*I`` with ``Var(n) = var``."""
    if var < 0:
        raise ValueError("var must be nonnegative")
    if var == 0:
        return img.copy()
    half_width = np.sqrt(3.0 * var)  # Uniform(-a, a) has variance a^2/3
    n = rng.uniform(-half_width, half_width, size=img.shape)
    return _finish(img + n * img, img)


def add_poisson(img: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Scaled Poisson (shot) noise: ``J = I + alpha*(Poisson(I*255)/255 - I)``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        return img.copy()
    counts = rng.poisson(np.asarray(img, dtype=np.float64) * _POISSON_PEAK)
    n = counts / _POISSON_PEAK - img
    return _finish(img + alpha * n, img)


def add_spatially_correlated(img: np.ndarray, sigma255: float,
                             rng: np.random.Generator) -> np.ndarray:
    """White Gaussian noise smoothed by a 3x3 mean filter, then added.

    The filter uses replicate padding at the borders and the field is not
    re-normalized afterwards, so its std shrinks to roughly a third of
    ``sigma255``/255 and neighboring pixels become correlated.
    """
    if sigma255 < 0:
        raise ValueError("sigma255 must be nonnegative")
    if sigma255 == 0:
        return img.copy()
    white = rng.normal(0.0, sigma255 / 255.0, size=img.shape)
    size = (3, 3) + (1,) * (img.ndim - 2)
    field = uniform_filter(white, size=size, mode="nearest")
    return _finish(img + field, img)


def add_salt_pepper(img: np.ndarray, density: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Impulse noise: a ``density`` fraction of pixels forced to 0 or 1.

    One uniform draw per pixel decides its fate jointly across channels:
    pepper below density/2, salt between density/2 and density.
    """
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    if density == 0:
        return img.copy()
    r = rng.random(size=img.shape[:2])
    pepper = r < density / 2.0
    salt = (r >= density / 2.0) & (r < density)
    out = np.array(img, dtype=img.dtype, copy=True)
    if img.ndim > 2:
        pepper = pepper[..., None]
        salt = salt[..., None]
    out = np.where(pepper, 0.0, out)
    out = np.where(salt, 1.0, out)
    return _finish(out, img)


def add_mixture(img: np.ndarray, level: int, rng: np.random.Generator) -> np.ndarray:
    """Composite corruption: Gaussian, speckle, Poisson, salt & pepper, speckle.

    Stage parameters are fixed per ``level`` (1 = mildest, 4 = strongest);
    each stage clips before the next sees the image.
    """
    if level not in MIXTURE_LEVELS:
        raise ValueError(f"mixture level must be in 1..4, got {level!r}")
    g_var, s1_var, alpha, d, s2_var = MIXTURE_LEVELS[level]
    out = add_gaussian(img, np.sqrt(g_var) * 255.0, rng)  # variance given on [0,1] scale
    out = add_speckle(out, s1_var, rng)
    out = add_poisson(out, alpha, rng)
    out = add_salt_pepper(out, d, rng)
    out = add_speckle(out, s2_var, rng)
    return out


_KINDS = ("gaussian", "speckle", "poisson", "spatcorr", "saltpepper", "mixture")


@dataclass(frozen=True)
class NoiseSpec:
    """A noise family plus its single parameter.

    ``value`` means: sigma on the 0-255 scale for gaussian/spatcorr,
    variance for speckle, scale alpha for poisson, density for saltpepper,
    level (1..4) for mixture.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "mixture":
            if int(self.value) != self.value or int(self.value) not in MIXTURE_LEVELS:
                raise ValueError("mixture level must be an integer in 1..4")
        elif self.kind == "saltpepper":
            if not 0.0 <= self.value <= 1.0:
                raise ValueError("saltpepper density must lie in [0, 1]")
        elif self.value < 0:
            raise ValueError(f"{self.kind} parameter must be nonnegative")

    def apply(self, img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            return add_gaussian(img, self.value, rng)
        if self.kind == "speckle":
            return add_speckle(img, self.value, rng)
        if self.kind == "poisson":
            return add_poisson(img, self.value, rng)
        if self.kind == "spatcorr":
            return add_spatially_correlated(img, self.value, rng)
        if self.kind == "saltpepper":
            return add_salt_pepper(img, self.value, rng)
        return add_mixture(img, int(self.value), rng)

    def label(self) -> str:
        if self.kind == "mixture":
            return f"mixture-L{int(self.value)}"
        return f"{self.kind}-{self.value:g}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        extra = set(d) - {"kind", "value"}
        if extra:
            raise ValueError(f"unknown noise spec keys: {sorted(extra)}")
        return cls(kind=d["kind"], value=float(d["value"]))
