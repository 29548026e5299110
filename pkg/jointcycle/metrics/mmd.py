from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist, pdist

MIN_SAMPLES = 20
FEATURE_SIZE = 8


def downsample(images: np.ndarray, size: int = FEATURE_SIZE) -> np.ndarray:
    """(N, C, H, W) -> (N, C*size*size) features by block averaging (zoom when not divisible)."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None]
    n, c, h, w = x.shape
    if h % size == 0 and w % size == 0:
        x = x.reshape(n, c, size, h // size, size, w // size).mean(axis=(3, 5))
    else:
        x = ndimage.zoom(x, (1, 1, size / h, size / w), order=1)
    return x.reshape(n, -1)


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    d = pdist(np.concatenate([x, y]), "euclidean")
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def gaussian_kernel(x: np.ndarray, y: np.ndarray, bw: float) -> np.ndarray:
    return np.exp(-0.5 * cdist(x, y, "sqeuclidean") / bw**2)


def _check(x: np.ndarray, y: np.ndarray, min_samples: int) -> None:
    if len(x) < min_samples or len(y) < min_samples:
        raise ValueError(f"mmd needs at least {min_samples} samples per set (got {len(x)} and {len(y)})")


def mmd_features(x: np.ndarray, y: np.ndarray, bw: float, biased: bool = False) -> float:
    """Squared MMD between feature rows; unbiased unless `biased`."""
    kxx, kyy, kxy = gaussian_kernel(x, x, bw), gaussian_kernel(y, y, bw), gaussian_kernel(x, y, bw)
    m, n = len(x), len(y)
    if biased:
        return float(kxx.mean() + kyy.mean() - 2.0 * kxy.mean())
    a = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    b = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(a + b - 2.0 * kxy.mean())


def mmd(
    set_A: np.ndarray,
    set_B: np.ndarray,
    bandwidth: float | None = None,
    biased: bool = False,
    min_samples: int = MIN_SAMPLES,
) -> float:
    """Gaussian-kernel squared MMD of two image sets on 8x8 downsampled pixels.

    `bandwidth=None` uses the median pairwise distance of the pooled sample.
    """
    x, y = downsample(set_A), downsample(set_B)
    _check(x, y, min_samples)
    bw = median_bandwidth(x, y) if bandwidth is None else bandwidth
    if bw <= 0:
        raise ValueError("bandwidth must be > 0")
    return mmd_features(x, y, bw, biased=biased)


def permutation_null(
    set_A: np.ndarray,
    set_B: np.ndarray,
    bandwidth: float | None = None,
    n_perm: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """MMD values under random relabelling of the pooled sample."""
    x, y = downsample(set_A), downsample(set_B)
    _check(x, y, 2)
    bw = median_bandwidth(x, y) if bandwidth is None else bandwidth
    pooled = np.concatenate([x, y])
    m = len(x)
    rng = np.random.default_rng(seed)
    out = np.empty(n_perm)
    for i in range(n_perm):
        p = rng.permutation(len(pooled))
        out[i] = mmd_features(pooled[p[:m]], pooled[p[m:]], bw)
    return out
