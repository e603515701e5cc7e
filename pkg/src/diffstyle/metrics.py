"""Quality metrics on plain arrays (not differentiable): SSIM and PSNR."""

from __future__ import annotations

import numpy as np

from .grad import _kernels as _k

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0

PSNR_CAP_DB = 100.0
PSNR_MSE_FLOOR = 1e-10


def _ssim_taps() -> np.ndarray:
    r = SSIM_WINDOW // 2
    xs = np.arange(-r, r + 1, dtype=np.float64)
    t = np.exp(-(xs * xs) / (2.0 * SSIM_SIGMA ** 2))
    return t / t.sum()


def _smooth2d(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable clamp-to-edge filtering of one (H,W) float64 array."""
    out = np.empty_like(x)
    _k.conv1d_last_fwd(np.ascontiguousarray(x), taps, out)
    xt = np.ascontiguousarray(out.T)
    out2 = np.empty_like(xt)
    _k.conv1d_last_fwd(xt, taps, out2)
    return np.ascontiguousarray(out2.T)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity, Gaussian 11x11 window, local stats at every
    pixel (clamp-to-edge), mean over pixels and channels. Inputs (C,H,W)
    in [0,1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    taps = _ssim_taps()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    vals = []
    for c in range(a.shape[0]):
        x, y = a[c], b[c]
        mx = _smooth2d(x, taps)
        my = _smooth2d(y, taps)
        sxx = _smooth2d(x * x, taps) - mx * mx
        syy = _smooth2d(y * y, taps) - my * my
        sxy = _smooth2d(x * y, taps) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append((num / den).mean())
    return float(np.mean(vals))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against peak 1.0, capped at 100."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(((a - b) ** 2).mean())
    if mse < PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))
