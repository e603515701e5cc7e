"""Structure tensor and the tangent (flow) field derived from it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grad import engine as E
from ..grad import _kernels as _k
from .color import luminance

# smoothing applied to the tensor channels; structural, not user-tunable
SIGMA_ST = 2.0

SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0]) / 4.0
SOBEL_DIFF = np.array([-1.0, 0.0, 1.0]) / 2.0


def sobel_gradients(image) -> tuple:
    """Luma Sobel derivatives: returns (gx, gy), each (1,H,W).

    Normalized so a unit-slope ramp reports slope 1 exactly.
    """
    lum = luminance(image)
    gx = E.conv1d(E.conv1d(lum, SOBEL_DIFF, axis=-1), SOBEL_SMOOTH, axis=-2)
    gy = E.conv1d(E.conv1d(lum, SOBEL_DIFF, axis=-2), SOBEL_SMOOTH, axis=-1)
    return gx, gy


def structure_tensor(image, sigma: float = SIGMA_ST) -> E.Node:
    """(3,H,W) tensor field: smoothed (gx^2, gx*gy, gy^2)."""
    gx, gy = sobel_gradients(image)
    st = E.concat([E.mul(gx, gx), E.mul(gx, gy), E.mul(gy, gy)], axis=0)
    return E.gaussian_separable(st, sigma)


@dataclass
class TangentField:
    """Per-pixel flow direction. t: Node (2,H,W), [0]=x, [1]=y component."""

    t: E.Node

    @property
    def shape(self):
        return self.t.value.shape[1:]

    def perp(self) -> E.Node:
        """Rotate the field 90 degrees: (tx,ty) -> (ty,-tx)."""
        tx = E.narrow(self.t, 0, 0, 1)
        ty = E.narrow(self.t, 0, 1, 1)
        return E.concat([ty, E.mul(tx, -1.0)], axis=0)


def tangent_field(st, mode: str = "unit") -> TangentField:
    """Minor-eigenvector field of the structure tensor.

    The tensor [[E,F],[F,G]] is symmetric PSD; the eigenvector for the
    smaller eigenvalue points along image contours. Two algebraic forms of
    that eigenvector exist, (l2-G, F) and (F, l2-E); per pixel the better-
    conditioned one (larger magnitude) is used. Eigenvectors have no
    intrinsic sign, so a scanline pass orients each against its already-
    oriented left/up neighbours. Branch picks, signs, and the degenerate
    mask are discrete per-pixel decisions, detached from the tape.

    mode "unit": normalized to length 1; pixels with no structure
    (raw magnitude <= 1e-8) fall back to the constant direction (0,1).
    mode "anisotropy": unit vector scaled by (l1-l2)/(l1+l2+1e-8), so
    isotropic regions fade toward zero instead of snapping to a fallback.
    """
    st = E.as_node(st)
    if st.value.shape[0] != 3:
        raise ValueError("structure tensor must be (3,H,W)")
    if mode not in ("unit", "anisotropy"):
        raise ValueError(f"unknown tangent mode {mode!r}")
    e = E.reshape(E.narrow(st, 0, 0, 1), st.value.shape[1:])
    f = E.reshape(E.narrow(st, 0, 1, 1), st.value.shape[1:])
    g = E.reshape(E.narrow(st, 0, 2, 1), st.value.shape[1:])

    tr = E.add(e, g)
    diff = E.sub(e, g)
    disc = E.add(E.mul(diff, diff), E.mul(E.mul(f, f), 4.0))
    root = E.sqrt(disc)
    l1 = E.mul(E.add(tr, root), 0.5)
    l2 = E.mul(E.sub(tr, root), 0.5)

    ax = E.sub(l2, g)   # form A: (l2-G, F)
    bx = f              # form B: (F, l2-E)
    by = E.sub(l2, e)
    mag_a = ax.value ** 2 + f.value ** 2
    mag_b = f.value ** 2 + by.value ** 2
    use_a = mag_a >= mag_b
    E.record_branch(use_a)
    tx = E.select(use_a, ax, bx)
    ty = E.select(use_a, f, by)

    sg = np.empty(tx.value.shape, dtype=tx.value.dtype)
    _k.orient_scanline(np.ascontiguousarray(tx.value),
                       np.ascontiguousarray(ty.value), sg)
    E.record_branch(sg)
    tx = E.mul(tx, E.constant(sg))
    ty = E.mul(ty, E.constant(sg))

    nrm2 = E.add(E.mul(tx, tx), E.mul(ty, ty))
    nrm = E.sqrt(nrm2)
    inv = E.div(E.constant(1.0), E.maximum(nrm, E.constant(1e-8)))
    ux = E.mul(tx, inv)
    uy = E.mul(ty, inv)

    if mode == "unit":
        degenerate = nrm.value <= 1e-8
        E.record_branch(degenerate)
        ux = E.select(degenerate, E.constant(np.zeros_like(ux.value)), ux)
        uy = E.select(degenerate, E.constant(np.ones_like(uy.value)), uy)
        t = E.stack_first([ux, uy])
    else:
        scale = E.div(E.sub(l1, l2), E.add(E.add(l1, l2), E.constant(1e-8)))
        t = E.stack_first([E.mul(ux, scale), E.mul(uy, scale)])
    return TangentField(t=t)
