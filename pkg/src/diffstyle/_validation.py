"""Input validation helpers shared by the functional core and estimators."""

from __future__ import annotations

import numpy as np


def check_image(x, name: str = "image", channels=None) -> np.ndarray:
    """Validate a (C,H,W) float image in [0,1]; returns a float array.

    Accepts (H,W) grayscale and promotes it to (1,H,W). Raises ValueError
    on anything else: wrong rank, empty axes, values outside [0,1], NaNs.
    """
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"{name} must be (C,H,W) or (H,W), got shape {x.shape}")
    c, h, w = x.shape
    if c not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {c}")
    if h < 2 or w < 2:
        raise ValueError(f"{name} spatial dims must be >= 2, got {h}x{w}")
    if not np.issubdtype(x.dtype, np.floating):
        raise ValueError(f"{name} must be float, got {x.dtype}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0,1], "
                         f"got [{x.min():.4g}, {x.max():.4g}]")
    return x


def check_mask(m, name: str = "mask") -> np.ndarray:
    """Validate a (1,Hm,Wm) or (Hm,Wm) normalized mask in [-0.5, 0.5]."""
    m = np.asarray(m)
    if m.ndim == 2:
        m = m[None]
    if m.ndim != 3 or m.shape[0] != 1:
        raise ValueError(f"{name} must be (1,H,W) or (H,W), got {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite values")
    if m.min() < -0.5 - 1e-6 or m.max() > 0.5 + 1e-6:
        raise ValueError(f"{name} values must lie in [-0.5, 0.5]")
    return m


def check_normalized_scalar(v, name: str = "param") -> float:
    v = float(v)
    if not np.isfinite(v):
        raise ValueError(f"{name} is not finite")
    return v


def hwc_to_chw(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(x, -1, 0))


def chw_to_hwc(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(x, 0, -1))
