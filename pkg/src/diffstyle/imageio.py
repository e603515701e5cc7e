"""PNG reading/writing for images (8-bit) and parameter masks (16-bit)."""

from __future__ import annotations

import numpy as np
from PIL import Image

from ._validation import chw_to_hwc, hwc_to_chw


def read_image(path) -> np.ndarray:
    """Load a PNG as float32 (C,H,W) in [0,1]; RGB(A) flattens to RGB."""
    with Image.open(path) as im:
        if im.mode in ("I", "I;16"):
            arr = np.asarray(im, dtype=np.float32) / 65535.0
            return arr[None]
        if im.mode == "L":
            return np.asarray(im, dtype=np.float32)[None] / 255.0
        rgb = im.convert("RGB")
        return hwc_to_chw(np.asarray(rgb, dtype=np.float32) / 255.0)


def write_image(path, chw: np.ndarray) -> None:
    """Write (C,H,W) [0,1] float as 8-bit PNG (grayscale or RGB)."""
    arr = np.clip(np.asarray(chw, dtype=np.float64), 0.0, 1.0)
    q = np.round(arr * 255.0).astype(np.uint8)
    # explicit format so writing into a file object (no extension) works
    if q.shape[0] == 1:
        Image.fromarray(q[0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(chw_to_hwc(q), mode="RGB").save(path, format="PNG")


def write_mask(path, mask: np.ndarray) -> None:
    """Persist a normalized mask (1,Hm,Wm) in [-0.5,0.5] as 16-bit PNG."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3:
        m = m[0]
    q = np.round(np.clip((m + 0.5), 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(q, mode="I;16").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Load a 16-bit mask PNG back to normalized (1,Hm,Wm)."""
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("mask PNG must be single-channel")
    return (arr[None] / 65535.0 - 0.5).astype(np.float32)
