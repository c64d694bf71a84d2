"""Linear centered kernel alignment between feature matrices.

Features are (m, p) arrays: m sampled data points by p feature dimensions.
All comparisons assume the m rows of every matrix correspond to the same
sampled positions.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError


class DegenerateFeaturesError(ValueError):
    """Constant features make CKA undefined (zero HSIC self-similarity)."""


def _check_features(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError("features must be (m, p) with m >= 2")
    if not np.isfinite(x).all():
        raise ValueError("features contain NaN or Inf")
    return x


def gram_linear(x: np.ndarray) -> np.ndarray:
    """Gram matrix K = X X^T."""
    x = _check_features(x)
    return x @ x.T


def center_gram(k: np.ndarray) -> np.ndarray:
    """Double-center: K' = H K H with H = I - (1/n) 1 1^T."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError("gram matrix must be square")
    means = k.mean(axis=0, keepdims=True)
    centered = k - means - means.T + k.mean()
    return centered


def hsic(k: np.ndarray, l: np.ndarray) -> float:
    """HSIC(K, L) = vec(K') . vec(L') / (m - 1)^2."""
    k = np.asarray(k, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    if k.shape != l.shape:
        raise ShapeError(f"gram shapes disagree: {k.shape} vs {l.shape}")
    m = k.shape[0]
    kc = center_gram(k)
    lc = center_gram(l)
    return float((kc.ravel() @ lc.ravel()) / (m - 1) ** 2)


def cka(x: np.ndarray, y: np.ndarray) -> float:
    """Linear CKA: HSIC(K, L) / sqrt(HSIC(K, K) * HSIC(L, L))."""
    x = _check_features(x)
    y = _check_features(y)
    if x.shape[0] != y.shape[0]:
        raise ShapeError("feature matrices must share the same number of rows")
    k = gram_linear(x)
    l = gram_linear(y)
    cross = hsic(k, l)
    kk = hsic(k, k)
    ll = hsic(l, l)
    if kk <= 0.0 or ll <= 0.0:
        raise DegenerateFeaturesError("constant features: CKA denominator is zero")
    return cross / np.sqrt(kk * ll)


def cka_matrix(feats_a: list[np.ndarray], feats_b: list[np.ndarray]) -> np.ndarray:
    """Pairwise CKA between two lists of per-layer features, (len_a, len_b)."""
    if not feats_a or not feats_b:
        raise ValueError("feature lists must be nonempty")
    m = feats_a[0].shape[0]
    for f in list(feats_a) + list(feats_b):
        if f.shape[0] != m:
            raise ShapeError("all layers must share the same sampled positions")
    out = np.empty((len(feats_a), len(feats_b)), dtype=np.float64)
    for i, fa in enumerate(feats_a):
        for j, fb in enumerate(feats_b):
            out[i, j] = cka(fa, fb)
    return out


def feature_stats(feats: np.ndarray) -> dict[str, np.ndarray]:
    """Per-dimension mean and std, plus the overall mean across everything."""
    feats = _check_features(feats)
    return {
        "mean": feats.mean(axis=0),
        "std": feats.std(axis=0),
        "overall_mean": np.asarray(feats.mean()),
    }
