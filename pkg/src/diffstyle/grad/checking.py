"""Finite-difference validation of the tape's gradients.

Checks run in float64. Each coordinate of the input is probed with central
differences; coordinates whose branch traces (discrete decisions recorded
by the ops) differ between the two probe points sit on a non-smooth
boundary, where a finite difference says nothing about the analytic
gradient, so they are skipped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as E


@dataclass
class CheckReport:
    name: str
    max_rel: float
    n_checked: int
    n_skipped: int
    worst_coord: tuple = ()
    notes: str = ""

    @property
    def ok(self) -> bool:
        return self.max_rel < 1e-3 and self.n_checked > 0

    def line(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return (f"{self.name:34s} {status:4s} max_rel={self.max_rel:.3e} "
                f"checked={self.n_checked} skipped={self.n_skipped}")


def _traces_equal(ta: list, tb: list) -> bool:
    if len(ta) != len(tb):
        return False
    for a, b in zip(ta, tb):
        if a.shape != b.shape or not np.array_equal(a, b):
            return False
    return True


def grad_check(f, x, eps: float = 1e-5, name: str = "fn",
               floor: float = 1e-6) -> CheckReport:
    """Compare tape gradients of scalar-valued f against central differences.

    f takes one Node (shaped like x) and returns a scalar Node. Runs in
    float64 regardless of ambient precision.
    """
    x = np.asarray(x, dtype=np.float64)
    with E.precision("float64"):
        leaf = E.leaf(x)
        out = f(leaf)
        if out.value.size != 1:
            raise ValueError("grad_check needs a scalar-valued function")
        if not np.isfinite(out.value).all():
            raise FloatingPointError("non-finite forward value")
        E.backward(out)
        analytic = E.grad_of(leaf)

        flat = x.reshape(-1)
        a_flat = analytic.reshape(-1)
        max_rel = 0.0
        worst = ()
        n_checked = 0
        n_skipped = 0
        for i in range(flat.size):
            orig = flat[i]
            with E.no_grad():
                flat[i] = orig + eps
                tp: list = []
                with E.branch_trace(tp):
                    fp = float(f(E.Node(x)).value)
                flat[i] = orig - eps
                tm: list = []
                with E.branch_trace(tm):
                    fm = float(f(E.Node(x)).value)
                flat[i] = orig
            if not _traces_equal(tp, tm):
                n_skipped += 1
                continue
            num = (fp - fm) / (2.0 * eps)
            a = a_flat[i]
            rel = abs(a - num) / max(abs(a), abs(num), floor)
            n_checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = np.unravel_index(i, x.shape)
    return CheckReport(name=name, max_rel=max_rel, n_checked=n_checked,
                       n_skipped=n_skipped, worst_coord=worst)


def grad_check_multi(build, arrays: dict, eps: float = 1e-5,
                     name: str = "fn") -> CheckReport:
    """Check w.r.t. several named arrays at once.

    build receives {name: Node} and returns a scalar Node. All arrays are
    packed into one flat vector so a single sweep covers every input.
    """
    names = list(arrays)
    shapes = {k: np.asarray(arrays[k]).shape for k in names}
    sizes = {k: int(np.prod(shapes[k], dtype=int)) if shapes[k] else 1
             for k in names}
    packed = np.concatenate(
        [np.asarray(arrays[k], dtype=np.float64).reshape(-1) for k in names])

    def f(vec):
        nodes = {}
        off = 0
        for k in names:
            sl = E.narrow(vec, 0, off, sizes[k])
            nodes[k] = E.reshape(sl, shapes[k])
            off += sizes[k]
        return build(nodes)

    return grad_check(f, packed, eps=eps, name=name)
