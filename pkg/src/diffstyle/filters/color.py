"""Color-space filters: luminance, tone adjustment, soft color quantization."""

from __future__ import annotations

import numpy as np

from ..grad import _kernels as _k
from ..grad import engine as E

# Rec.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# candidate bin counts scanned by the quantization gradient rule
QUANT_CANDIDATES = np.linspace(1.0, 32.0, 64)

_QUANT_CENTERS = {}


def _quant_centers(cand: np.ndarray):
    """Per-candidate bin-center table (and top bin index) for the score scan.

    centers[r, q] = (q + 0.5) / cand[r], computed in the scan's own dtype so
    the cached quotients are bitwise what the division would produce.
    """
    key = cand.dtype.char
    hit = _QUANT_CENTERS.get(key)
    if hit is None:
        top = (np.ceil(cand) - 1.0).astype(np.int64)
        q = np.arange(int(top.max()) + 1, dtype=cand.dtype)
        centers = (q[None, :] + cand.dtype.type(0.5)) / cand[:, None]
        hit = (top, np.ascontiguousarray(centers))
        _QUANT_CENTERS[key] = hit
    return hit


def luminance(image) -> E.Node:
    """(C,H,W) -> (1,H,W) luma; grayscale input passes through."""
    image = E.as_node(image)
    c = image.value.shape[0]
    if c == 1:
        return image
    w = np.asarray(LUMA_WEIGHTS, dtype=image.value.dtype).reshape(3, 1, 1)
    return E.sum_channels(E.mul(image, E.constant(w)))


def color_adjust(image, saturation, contrast, gamma) -> E.Node:
    """Gamma, then contrast about 0.5, then saturation about luma, then clamp.

    saturation/contrast/gamma broadcast: scalars (0-d) or per-pixel (1,H,W).
    """
    image = E.as_node(image)
    x = E.pow_(E.maximum(image, E.constant(1e-4)), gamma)
    x = E.add(E.constant(0.5), E.mul(contrast, E.sub(x, E.constant(0.5))))
    lum = luminance(x)
    x = E.add(lum, E.mul(saturation, E.sub(x, lum)))
    return E.clamp(x, 0.0, 1.0)


def hard_quantize(x: np.ndarray, b: float) -> np.ndarray:
    """Snap values to bin centers: (floor(x*b) + 0.5) / b. Plain arrays.

    The top edge joins the highest bin (x=1 would otherwise index one past
    it and push the output above 1).
    """
    idx = np.minimum(np.floor(x * b), np.ceil(b) - 1.0)
    return (idx + 0.5) / b


def quantize(image, bins, softness) -> E.Node:
    """Soft posterization with a search-based gradient for the bin count.

    Forward: y = q + (1/(2b)) * tanh(s*b*(x - q)) with q the hard-quantized
    image. softness s = 0 collapses to y = q exactly; large s approaches the
    hard staircase (s around 40 is visually hard).

    The chain rule is useless for b (the staircase is piecewise constant),
    so its gradient is replaced: candidate counts r are scored by how well
    their staircase moves the output the way the upstream gradient asks,
    f(r) = sum_i sign(y_i - quant_r(x)_i) * sign(g_i), and the winning
    b_hat = argmax f (ties -> smallest r) sets grad_b = sum|g| * (b - b_hat).
    """
    image, bins, softness = E.as_node(image), E.as_node(bins), E.as_node(softness)
    xv = image.value
    if bins.value.size != 1:
        raise ValueError("bins must be a scalar (the search rule has no "
                         "per-pixel form)")
    bv = float(bins.value)
    if bv <= 0:
        raise ValueError("bins must be positive")
    q = E.constant(hard_quantize(xv, bv))
    inner = E.mul(E.constant(bv), E.mul(softness, E.sub(image, q)))
    y = E.add(q, E.mul(E.constant(1.0 / (2.0 * bv)), E.tanh(inner)))

    def rule_b(g):
        cand = QUANT_CANDIDATES.astype(xv.dtype)
        top, centers = _quant_centers(cand)
        scores = np.zeros(cand.shape[0], dtype=np.int64)
        gsum = _k.quant_scores(
            xv.reshape(-1), y.value.reshape(-1),
            np.ascontiguousarray(g, dtype=xv.dtype).reshape(-1),
            cand, top, centers, scores)
        b_hat = float(cand[int(np.argmax(scores))])  # first max: smallest r
        E.record_branch(np.asarray(b_hat))
        gb = gsum * (bv - b_hat)
        return np.asarray(gb, dtype=g.dtype).reshape(bins.value.shape)

    out = E.Node(y.value, y.parents + ((bins, rule_b),) if E.grad_enabled() else ())
    return out
