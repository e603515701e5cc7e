"""Literal per-pixel loop implementations of the flow filters.

Independent of the tape engine and its kernels: plain float64 numpy with
explicit loops, written directly from the filter definitions. Slow by
design; used to pin down the vectorized versions in tests and as the
ground truth for budget-equivalence checks.
"""

from __future__ import annotations

import numpy as np


def bilinear_at(img: np.ndarray, x: float, y: float) -> np.ndarray:
    """Sample (C,H,W) at one clamped position; returns (C,)."""
    _, h, w = img.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(np.floor(x)), w - 2)
    y0 = min(int(np.floor(y)), h - 2)
    fx = x - x0
    fy = y - y0
    return ((1 - fx) * (1 - fy) * img[:, y0, x0]
            + fx * (1 - fy) * img[:, y0, x0 + 1]
            + (1 - fx) * fy * img[:, y0 + 1, x0]
            + fx * fy * img[:, y0 + 1, x0 + 1])


def oracle_grid_sample(img: np.ndarray, grid: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    spatial = grid.shape[1:]
    gx = grid[0].reshape(-1)
    gy = grid[1].reshape(-1)
    out = np.empty((img.shape[0], gx.size))
    for p in range(gx.size):
        out[:, p] = bilinear_at(img, gx[p], gy[p])
    return out.reshape((img.shape[0],) + spatial)


def oracle_conv1d(x: np.ndarray, taps: np.ndarray, axis: int = -1) -> np.ndarray:
    """Centered clamp-to-edge correlation, one multiply at a time."""
    x = np.asarray(x, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    xm = np.moveaxis(x, axis, -1)
    flat = xm.reshape(-1, xm.shape[-1])
    out = np.zeros_like(flat)
    r = len(taps) // 2
    n = flat.shape[-1]
    for m in range(flat.shape[0]):
        for i in range(n):
            acc = 0.0
            for t in range(len(taps)):
                j = min(max(i + t - r, 0), n - 1)
                acc += taps[t] * flat[m, j]
            out[m, i] = acc
    return np.moveaxis(out.reshape(xm.shape), -1, axis)


def _sig_at(sigma, i: int, j: int) -> float:
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim == 0:
        return float(s)
    if s.ndim == 3:
        s = s[0]
    return float(s[i, j])


def oracle_oabf_pass(img: np.ndarray, direction: np.ndarray, sigma_d,
                     sigma_r, budget=None) -> np.ndarray:
    """One bilateral line pass, exact per-pixel loops, no sample cap."""
    img = np.asarray(img, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    c, h, w = img.shape
    out = np.empty_like(img)
    for i in range(h):
        for j in range(w):
            dx, dy = direction[0, i, j], direction[1, i, j]
            dn = np.hypot(dx, dy)
            sd = _sig_at(sigma_d, i, j)
            sr = _sig_at(sigma_r, i, j)
            n = int(np.floor(2.0 * sd / max(dn, 1e-4)))
            if budget is not None:
                n = min(n, int(budget))
            center = img[:, i, j]
            num = np.zeros(c)
            den = 0.0
            for k in range(-n, n + 1):
                s = bilinear_at(img, j + k * dx, i + k * dy)
                arc2 = (k * dn) ** 2
                d2 = float(((s - center) ** 2).sum())
                wgt = np.exp(-arc2 / (2.0 * sd * sd)) \
                    * np.exp(-d2 / (2.0 * sr * sr))
                num += wgt * s
                den += wgt
            out[:, i, j] = num / den
    return out


def oracle_flow_gaussian(img: np.ndarray, direction: np.ndarray, sigma,
                         budget=None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    c, h, w = img.shape
    out = np.empty_like(img)
    for i in range(h):
        for j in range(w):
            dx, dy = direction[0, i, j], direction[1, i, j]
            dn = np.hypot(dx, dy)
            sg = _sig_at(sigma, i, j)
            n = int(np.floor(2.0 * sg / max(dn, 1e-4)))
            if budget is not None:
                n = min(n, int(budget))
            num = np.zeros(c)
            den = 0.0
            for k in range(-n, n + 1):
                s = bilinear_at(img, j + k * dx, i + k * dy)
                wgt = np.exp(-((k * dn) ** 2) / (2.0 * sg * sg))
                num += wgt * s
                den += wgt
            out[:, i, j] = num / den
    return out


def oracle_flow_dog(lum: np.ndarray, tangent: np.ndarray, sigma_e, tau,
                    sigma_m, k_factor: float = 1.6, budget=None) -> np.ndarray:
    """Two line Gaussians across the flow (narrow - tau*wide), then a
    Gaussian along the flow."""
    lum = np.asarray(lum, dtype=np.float64)
    tangent = np.asarray(tangent, dtype=np.float64)
    perp = np.stack([tangent[1], -tangent[0]])
    g1 = oracle_flow_gaussian(lum, perp, sigma_e, budget)
    wide = np.asarray(sigma_e, dtype=np.float64) * k_factor
    g2 = oracle_flow_gaussian(lum, perp, wide, budget)
    tau = np.asarray(tau, dtype=np.float64)
    if tau.ndim == 3:
        tau = tau[0]
    resp = g1 - tau * g2
    return oracle_flow_gaussian(resp, tangent, sigma_m, budget)
