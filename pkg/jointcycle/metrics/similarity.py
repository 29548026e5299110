from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import ShapeError

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
DYNAMIC_RANGE = 2.0
K1, K2 = 0.01, 0.03


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian weights; the separable product gaussian_filter applies."""
    r = size // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _as_planes(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ShapeError(f"ssim needs at least 2-D images, got shape {x.shape}")
    return x


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-window SSIM over every full 11x11 window of the last two axes."""
    a, b = _as_planes(a), _as_planes(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    sigma = (0.0,) * (a.ndim - 2) + (SSIM_SIGMA, SSIM_SIGMA)
    truncate = (SSIM_WINDOW // 2) / SSIM_SIGMA

    def blur(x: np.ndarray) -> np.ndarray:
        return ndimage.gaussian_filter(x, sigma=sigma, truncate=truncate, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    c1 = (K1 * DYNAMIC_RANGE) ** 2
    c2 = (K2 * DYNAMIC_RANGE) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    r = SSIM_WINDOW // 2
    return s[..., r:-r, r:-r]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over all full windows (and over any leading batch/channel axes)."""
    return float(ssim_map(a, b).mean())


def _binary(x: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(x) > threshold


def _dilate(mask: np.ndarray, tol: int) -> np.ndarray:
    if tol <= 0 or not mask.any():
        return mask
    struct = np.ones((1,) * (mask.ndim - 2) + (2 * tol + 1, 2 * tol + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=struct)


def edge_f1_at(pred: np.ndarray, truth: np.ndarray, tol: int = 1) -> float:
    """Pixel F1 of two boolean edge maps; a pixel matches anything within +-tol (Chebyshev)."""
    n_pred, n_true = int(pred.sum()), int(truth.sum())
    if n_pred == 0 and n_true == 0:
        return 1.0
    if n_pred == 0 or n_true == 0:
        return 0.0
    precision = float((pred & _dilate(truth, tol)).sum()) / n_pred
    recall = float((truth & _dilate(pred, tol)).sum()) / n_true
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def edge_thresholds(n: int = 25) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n + 2)[1:-1]


def edge_f1(pred_edges: np.ndarray, true_edges: np.ndarray, tol: int = 1, n_thresholds: int = 25) -> float:
    """Best F1 over `n_thresholds` cut points of the predicted map (edges +1, background -1).

    One threshold is chosen for the whole set; counts pool over all images.
    """
    pred_edges, true_edges = np.asarray(pred_edges), np.asarray(true_edges)
    if pred_edges.shape != true_edges.shape:
        raise ShapeError(f"edge_f1: shapes {pred_edges.shape} and {true_edges.shape} differ")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    truth = _binary(true_edges, 0.0)
    return max(edge_f1_at(_binary(pred_edges, thr), truth, tol) for thr in edge_thresholds(n_thresholds))
