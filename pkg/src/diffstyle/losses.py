"""Differentiable losses: pixel terms plus mask total variation."""

from __future__ import annotations

import numpy as np

from .grad import engine as E


def _pair(pred, target) -> tuple:
    pred = E.as_node(pred)
    t = np.asarray(target, dtype=pred.value.dtype)
    if t.shape != pred.value.shape:
        raise ValueError(
            f"shape mismatch: prediction {pred.value.shape} vs "
            f"target {t.shape}")
    return pred, E.constant(t)


def l1_loss(pred, target) -> E.Node:
    """Mean absolute error."""
    pred, t = _pair(pred, target)
    return E.mean_all(E.abs_(E.sub(pred, t)))


def l2_loss(pred, target) -> E.Node:
    """Mean squared error."""
    pred, t = _pair(pred, target)
    d = E.sub(pred, t)
    return E.mean_all(E.mul(d, d))


LOSSES = {"l1": l1_loss, "l2": l2_loss}


def _tv_axis(m: E.Node, axis: int) -> E.Node:
    n = m.value.shape[axis]
    a = E.narrow(m, axis, 1, n - 1)
    b = E.narrow(m, axis, 0, n - 1)
    return E.mean_all(E.abs_(E.sub(a, b)))


def tv_loss(mask_nodes) -> E.Node:
    """Mean over masks of mean|dx| + mean|dy| on the normalized values.

    Defined on the stored (quarter-resolution, normalized) masks, so the
    penalty's scale does not depend on the image resolution.
    """
    mask_nodes = list(mask_nodes)
    if not mask_nodes:
        return E.constant(0.0)
    terms = []
    for m in mask_nodes:
        m = E.as_node(m)
        terms.append(E.add(_tv_axis(m, -1), _tv_axis(m, -2)))
    total = terms[0]
    for t in terms[1:]:
        total = E.add(total, t)
    return E.mul(total, 1.0 / len(terms))
