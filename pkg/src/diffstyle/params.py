"""Parameter model: typed specs, normalized storage, masks, persistence.

Every tunable lives in a normalized domain [-0.5, 0.5] that maps affinely
onto its physical range; optimizers only ever see the normalized values.
A parameter is either one scalar or a quarter-resolution mask (1,Hm,Wm)
that gets bilinearly upsampled (differentiably) to the image size.
Manual set() calls accept out-of-range values; only the optimizer projects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imageio
from ._validation import check_mask
from .grad import _kernels as _k
from .grad import engine as E

MASK_DOWNSCALE = 4
MASK_SMOOTH_SIGMA = 3.0


@dataclass(frozen=True)
class ParamSpec:
    """One tunable: physical range, default, and what it is allowed to be."""

    name: str
    lo: float
    hi: float
    default: float
    maskable: bool = True
    differentiable: bool = True

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def to_physical(self, v):
        return self.lo + (np.asarray(v) + 0.5) * self.span

    def to_normalized(self, p):
        return (np.asarray(p) - self.lo) / self.span - 0.5

    @property
    def default_normalized(self) -> float:
        return float(self.to_normalized(self.default))


def mask_shape(h: int, w: int) -> tuple:
    return (max(1, h // MASK_DOWNSCALE), max(1, w // MASK_DOWNSCALE))


class ParamSet:
    """Normalized values for one pipeline's registry.

    values[name] is a 0-d float array (scalar) or (1,Hm,Wm) float array
    (mask). Missing names mean "default".
    """

    def __init__(self, specs: dict, values: dict | None = None):
        self.specs = dict(specs)
        self.values: dict = {}
        for name, v in (values or {}).items():
            self._check_name(name)
            v = np.asarray(v, dtype=np.float32)
            if v.ndim:
                self.set_mask(name, v)
            else:
                self.values[name] = v
        for name, spec in self.specs.items():
            self.values.setdefault(
                name, np.asarray(spec.default_normalized, dtype=np.float32))

    def _check_name(self, name: str) -> None:
        if name not in self.specs:
            known = ", ".join(sorted(self.specs))
            raise KeyError(f"unknown parameter {name!r}; registry has: {known}")

    def is_mask(self, name: str) -> bool:
        self._check_name(name)
        return self.values[name].ndim == 3

    def mask_names(self) -> list:
        return [n for n in self.specs if self.is_mask(n)]

    def get_normalized(self, name: str) -> np.ndarray:
        self._check_name(name)
        return self.values[name]

    def get_physical(self, name: str):
        v = self.get_normalized(name)
        p = self.specs[name].to_physical(v)
        return p if v.ndim else float(p)

    def set_scalar(self, name: str, physical=None, normalized=None) -> None:
        self._check_name(name)
        if (physical is None) == (normalized is None):
            raise ValueError("give exactly one of physical/normalized")
        if physical is not None:
            normalized = self.specs[name].to_normalized(float(physical))
        self.values[name] = np.asarray(float(normalized), dtype=np.float32)

    def set_mask(self, name: str, mask_normalized) -> None:
        self._check_name(name)
        if not self.specs[name].maskable:
            raise ValueError(f"parameter {name!r} cannot be a mask")
        self.values[name] = check_mask(mask_normalized, name).astype(np.float32)

    def to_scalar(self, name: str) -> None:
        """Collapse a mask back to a scalar (its mean)."""
        self._check_name(name)
        v = self.values[name]
        if v.ndim:
            self.values[name] = np.asarray(float(v.mean()), dtype=np.float32)

    def copy(self) -> "ParamSet":
        return ParamSet(self.specs, {k: v.copy() for k, v in self.values.items()})

    def project_(self) -> None:
        """Clip every normalized value into [-0.5, 0.5]."""
        for name, v in self.values.items():
            self.values[name] = np.clip(v, -0.5, 0.5).astype(v.dtype, copy=False)

    def smooth_masks_(self, sigma: float = MASK_SMOOTH_SIGMA) -> None:
        for name in self.mask_names():
            self.values[name] = gaussian_smooth_array(self.values[name], sigma)

    # ------------------------------------------------------------ persistence

    def to_json_dict(self, mask_store=None) -> dict:
        """mask_store: dict collecting {filename: mask array} for PNG output;
        None embeds masks as nested lists instead."""
        out = {}
        for name, v in self.values.items():
            if v.ndim:
                if mask_store is not None:
                    fname = f"mask_{name}.png"
                    mask_store[fname] = v
                    out[name] = {"mask_png": fname,
                                 "shape": [int(v.shape[1]), int(v.shape[2])]}
                else:
                    out[name] = {"mask": v[0].tolist()}
            else:
                out[name] = float(v)
        return out

    @classmethod
    def from_json_dict(cls, specs: dict, data: dict, mask_dir=None) -> "ParamSet":
        values = {}
        for name, v in data.items():
            if isinstance(v, dict):
                if "mask_png" in v:
                    if mask_dir is None:
                        raise ValueError(f"{name}: mask PNG given without a "
                                         "directory to load it from")
                    values[name] = imageio.read_mask(
                        Path(mask_dir) / v["mask_png"])
                else:
                    values[name] = np.asarray(v["mask"], dtype=np.float32)[None]
            else:
                values[name] = np.asarray(float(v), dtype=np.float32)
        return cls(specs, values)

    def save(self, json_path) -> None:
        json_path = Path(json_path)
        store: dict = {}
        payload = self.to_json_dict(mask_store=store)
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        for fname, mask in store.items():
            imageio.write_mask(json_path.parent / fname, mask)

    @classmethod
    def load(cls, specs: dict, json_path) -> "ParamSet":
        json_path = Path(json_path)
        data = json.loads(json_path.read_text())
        return cls.from_json_dict(specs, data, mask_dir=json_path.parent)


def gaussian_smooth_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable clamp-to-edge Gaussian on a plain (1,H,W) array."""
    taps = E.gaussian_taps(sigma, arr.dtype)
    x = np.ascontiguousarray(arr.reshape(-1, arr.shape[-1]))
    out = np.empty_like(x)
    _k.conv1d_last_fwd(x, taps, out)
    out = out.reshape(arr.shape)
    xt = np.ascontiguousarray(np.swapaxes(out, -1, -2))
    out2 = np.empty_like(xt.reshape(-1, xt.shape[-1]))
    _k.conv1d_last_fwd(xt.reshape(-1, xt.shape[-1]), taps, out2)
    return np.ascontiguousarray(
        np.swapaxes(out2.reshape(xt.shape), -1, -2))


def upsample_grid(hm: int, wm: int, h: int, w: int, dtype) -> np.ndarray:
    """Pixel-center mapping from image (h,w) into mask (hm,wm) coordinates."""
    xs = (np.arange(w, dtype=dtype) + 0.5) * (wm / w) - 0.5
    ys = (np.arange(h, dtype=dtype) + 0.5) * (hm / h) - 0.5
    gx = np.broadcast_to(xs, (h, w))
    gy = np.broadcast_to(ys[:, None], (h, w))
    return np.stack([gx, gy])


def to_physical(pset: ParamSet, hw: tuple) -> tuple:
    """Build leaf nodes plus physical-domain graph nodes for each parameter.

    Returns (leaves, phys): leaves[name] is the normalized leaf Node the
    optimizer reads gradients from; phys[name] is 0-d or (1,H,W) in the
    physical domain, masks bilinearly upsampled to the image size.
    """
    h, w = hw
    leaves = {}
    phys = {}
    for name, spec in pset.specs.items():
        v = pset.values[name]
        lf = E.leaf(v)
        leaves[name] = lf
        node = lf
        if v.ndim:
            grid = E.constant(upsample_grid(v.shape[1], v.shape[2], h, w,
                                            E.current_dtype()))
            node = E.grid_sample_bilinear(lf, grid)
        node = E.add(E.mul(E.add(node, E.constant(0.5)), E.constant(spec.span)),
                     E.constant(spec.lo))
        phys[name] = node
    return leaves, phys
