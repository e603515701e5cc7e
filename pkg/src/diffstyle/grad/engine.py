"""Reverse-mode autodiff over numpy arrays.

A Node wraps an ndarray value plus a list of (parent, rule) edges, where
rule(upstream_grad) -> gradient contribution for that parent. backward()
does one reverse-topological sweep and accumulates into .grad; calling it
again without zero_grads() accumulates again, by design.

Two global modes, both managed with context managers:

* precision("float64") switches newly-created leaves and constants to
  double (used by gradient checking); production default is float32.
* no_grad() builds value-only nodes (no parents), so big forwards can run
  without holding a tape.

Non-differentiable decisions taken inside ops (clamp saturation, floor
cells, selected branches) can be recorded with branch_trace(); gradient
checking compares traces between probe evaluations and skips coordinates
whose decisions flipped.
"""

from __future__ import annotations

import contextlib
from typing import Callable

import numpy as np

from . import _kernels as _k

_DTYPES = {"float32": np.float32, "float64": np.float64}

_state = {"dtype": np.float32, "grad": True, "trace": None}

# exp() clips its argument here; keeps every forward value finite even for
# adversarial parameter settings (float32 overflows just past 88)
EXP_MAX_ARG = 80.0


def current_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the dtype used for new leaves/constants."""
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}")
    old = _state["dtype"]
    _state["dtype"] = _DTYPES[name]
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    """Build value-only graphs (nodes carry no parents) inside the block."""
    old = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = old


def grad_enabled() -> bool:
    return _state["grad"]


@contextlib.contextmanager
def branch_trace(out: list):
    """Collect discrete per-op decisions (arrays) into `out` while active."""
    old = _state["trace"]
    _state["trace"] = out
    try:
        yield out
    finally:
        _state["trace"] = old


def record_branch(arr) -> None:
    t = _state["trace"]
    if t is not None:
        t.append(np.asarray(arr).copy())


class Node:
    """One tape entry: a value and how to push gradients to its parents.

    need marks whether any retained leaf sits below this node; backward
    prunes rule calls into subgraphs where nothing wants a gradient.
    """

    __slots__ = ("value", "grad", "parents", "retain", "need")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=current_dtype())
        self.grad = None
        self.parents = parents if _state["grad"] else ()
        self.retain = False
        self.need = any(p.need for p, _ in self.parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, dtype={self.value.dtype})"

    # operator sugar; every overload routes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_node(x) -> Node:
    """Wrap plain values as constant (leaf) nodes; pass nodes through."""
    if isinstance(x, Node):
        return x
    return Node(x)


def leaf(x) -> Node:
    """A fresh differentiable leaf holding a copy of x; its grad is kept."""
    n = Node(np.array(x, dtype=current_dtype()))
    n.retain = True
    n.need = True
    return n


def grad_of(node: Node) -> np.ndarray:
    """node.grad, with None read as zeros."""
    if node.grad is None:
        return np.zeros_like(node.value)
    return node.grad


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape` by summing expanded axes."""
    g = np.asarray(g)
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, da: Callable, db: Callable) -> Node:
    a, b = as_node(a), as_node(b)
    out_v = fwd(a.value, b.value)
    parents = (
        (a, lambda g: _unbroadcast(da(g, a.value, b.value, out_v), a.value.shape)),
        (b, lambda g: _unbroadcast(db(g, a.value, b.value, out_v), b.value.shape)),
    )
    return Node(out_v, parents)


def add(a, b) -> Node:
    return _binary(a, b, np.add, lambda g, av, bv, ov: g, lambda g, av, bv, ov: g)


def sub(a, b) -> Node:
    return _binary(a, b, np.subtract,
                   lambda g, av, bv, ov: g, lambda g, av, bv, ov: -g)


def mul(a, b) -> Node:
    return _binary(a, b, np.multiply,
                   lambda g, av, bv, ov: g * bv, lambda g, av, bv, ov: g * av)


def _guard_den(d: np.ndarray) -> np.ndarray:
    # keep the sign, force magnitude >= 1e-8 (exact zero counts as positive)
    eps = np.asarray(1e-8, dtype=d.dtype)
    return np.where(d < 0, np.minimum(d, -eps), np.maximum(d, eps))


def div(a, b) -> Node:
    """a / b with the denominator nudged away from zero, sign preserved."""
    a, b = as_node(a), as_node(b)
    bg = _guard_den(b.value)
    record_branch(np.abs(b.value) < 1e-8)
    out_v = a.value / bg
    parents = (
        (a, lambda g: _unbroadcast(g / bg, a.value.shape)),
        (b, lambda g: _unbroadcast(-g * out_v / bg, b.value.shape)),
    )
    return Node(out_v, parents)


def pow_(a, b) -> Node:
    """a ** b. The base must stay positive for the b-gradient (log)."""
    a, b = as_node(a), as_node(b)
    out_v = a.value ** b.value
    safe = np.maximum(a.value, 1e-12)
    parents = (
        (a, lambda g: _unbroadcast(g * b.value * safe ** (b.value - 1),
                                   a.value.shape)),
        (b, lambda g: _unbroadcast(g * out_v * np.log(safe), b.value.shape)),
    )
    return Node(out_v, parents)


def exp(a) -> Node:
    a = as_node(a)
    v = a.value
    if v.size and float(v.max()) > EXP_MAX_ARG:
        v = np.minimum(v, EXP_MAX_ARG)
    out_v = np.exp(v)
    return Node(out_v, ((a, lambda g: g * out_v),))


def tanh(a) -> Node:
    a = as_node(a)
    out_v = np.tanh(a.value)
    return Node(out_v, ((a, lambda g: g * (1.0 - out_v * out_v)),))


def sqrt(a) -> Node:
    """sqrt(max(a, 1e-12)): floored so the slope stays finite near zero.

    The gradient is the exact derivative of the floored composition (zero
    inside the floor region), so finite differences agree everywhere away
    from the recorded floor boundary.
    """
    a = as_node(a)
    live = a.value > 1e-12
    record_branch(live)
    out_v = np.sqrt(np.maximum(a.value, 1e-12))
    return Node(out_v, ((a, lambda g: g * live * (0.5 / out_v)),))


def abs_(a) -> Node:
    a = as_node(a)
    s = np.sign(a.value)
    record_branch(s)
    return Node(np.abs(a.value), ((a, lambda g: g * s),))


def sign(a) -> Node:
    """Elementwise sign; gradient is zero everywhere (piecewise constant)."""
    a = as_node(a)
    s = np.sign(a.value)
    record_branch(s)
    return Node(s, ((a, lambda g: np.zeros_like(a.value)),))


def clamp(a, lo: float, hi: float) -> Node:
    """Clip to [lo, hi]; ties at the bounds keep the pass-through gradient."""
    a = as_node(a)
    out_v = np.clip(a.value, lo, hi)
    inside = (a.value >= lo) & (a.value <= hi)
    record_branch(inside)
    return Node(out_v, ((a, lambda g: g * inside),))


def minimum(a, b) -> Node:
    """Elementwise min; a wins ties."""
    a, b = as_node(a), as_node(b)
    take_a = a.value <= b.value
    record_branch(take_a)
    out_v = np.where(take_a, a.value, b.value)
    parents = (
        (a, lambda g: _unbroadcast(g * take_a, a.value.shape)),
        (b, lambda g: _unbroadcast(g * ~take_a, b.value.shape)),
    )
    return Node(out_v, parents)


def maximum(a, b) -> Node:
    """Elementwise max; a wins ties."""
    a, b = as_node(a), as_node(b)
    take_a = a.value >= b.value
    record_branch(take_a)
    out_v = np.where(take_a, a.value, b.value)
    parents = (
        (a, lambda g: _unbroadcast(g * take_a, a.value.shape)),
        (b, lambda g: _unbroadcast(g * ~take_a, b.value.shape)),
    )
    return Node(out_v, parents)


def select(cond, a, b) -> Node:
    """where(cond, a, b); cond is a plain boolean array, not a node."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_node(a), as_node(b)
    record_branch(cond)
    out_v = np.where(cond, a.value, b.value)
    parents = (
        (a, lambda g: _unbroadcast(g * cond, a.value.shape)),
        (b, lambda g: _unbroadcast(g * ~cond, b.value.shape)),
    )
    return Node(out_v, parents)


def detach(a) -> np.ndarray:
    return as_node(a).value


def constant(x) -> Node:
    n = Node(np.asarray(x))
    n.parents = ()
    return n


# ---------------------------------------------------------------- reshaping

def reshape(a, shape) -> Node:
    a = as_node(a)
    in_shape = a.value.shape
    return Node(a.value.reshape(shape),
                ((a, lambda g: g.reshape(in_shape)),))


def unsqueeze_last(a) -> Node:
    a = as_node(a)
    return reshape(a, a.value.shape + (1,))


def narrow(a, axis: int, start: int, length: int) -> Node:
    """Slice `length` entries from `start` along `axis`; zero-pad on backward."""
    a = as_node(a)
    idx = [slice(None)] * a.value.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    in_shape = a.value.shape

    def back(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[idx] = g
        return full

    return Node(a.value[idx], ((a, back),))


def concat(nodes, axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.value.shape[axis] for n in nodes]
    offs = np.cumsum([0] + sizes)
    out_v = np.concatenate([n.value for n in nodes], axis=axis)

    def make(i):
        lo, hi = offs[i], offs[i + 1]

        def back(g):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            return g[tuple(idx)]

        return back

    return Node(out_v, tuple((n, make(i)) for i, n in enumerate(nodes)))


def stack_first(nodes) -> Node:
    """Stack along a new leading axis."""
    nodes = [as_node(n) for n in nodes]
    out_v = np.stack([n.value for n in nodes], axis=0)

    def make(i):
        return lambda g: g[i]

    return Node(out_v, tuple((n, make(i)) for i, n in enumerate(nodes)))


# ---------------------------------------------------------------- reductions

def sum_all(a) -> Node:
    a = as_node(a)
    shape = a.value.shape
    return Node(a.value.sum(),
                ((a, lambda g: np.broadcast_to(g, shape)),))


def mean_all(a) -> Node:
    a = as_node(a)
    n = a.value.size
    shape = a.value.shape
    return Node(a.value.mean(),
                ((a, lambda g: np.broadcast_to(g / n, shape)),))


def sum_last(a) -> Node:
    """Sum over the trailing (kernel) dimension."""
    a = as_node(a)
    shape = a.value.shape
    return Node(a.value.sum(axis=-1),
                ((a, lambda g: np.broadcast_to(g[..., None], shape)),))


def sum_channels(a) -> Node:
    """Sum over the leading (channel) dimension, keeping it with size 1."""
    a = as_node(a)
    shape = a.value.shape
    return Node(a.value.sum(axis=0, keepdims=True),
                ((a, lambda g: np.broadcast_to(g, shape)),))


# ------------------------------------------------------------- convolutions

def conv1d(a, taps, axis: int = -1) -> Node:
    """Centered 1-D correlation along `axis` with clamp-to-edge borders.

    taps is a plain 1-D array (odd length); it is a fixed kernel, not a node.
    """
    a = as_node(a)
    taps = np.asarray(taps, dtype=a.value.dtype)
    if taps.ndim != 1 or taps.shape[0] % 2 == 0:
        raise ValueError("taps must be 1-D with odd length")
    v = a.value
    axis = axis % v.ndim
    moved = axis != v.ndim - 1

    def to_last(x):
        return np.ascontiguousarray(np.moveaxis(x, axis, -1)) if moved else x

    def from_last(x):
        return np.moveaxis(x, -1, axis) if moved else x

    xl = to_last(v)
    flat = xl.reshape(-1, xl.shape[-1])
    out = np.empty_like(flat)
    _k.conv1d_last_fwd(flat, taps, out)
    out_v = from_last(out.reshape(xl.shape))

    def back(g):
        gl = to_last(np.ascontiguousarray(g))
        gf = gl.reshape(-1, gl.shape[-1])
        gx = np.zeros_like(gf)
        _k.conv1d_last_bwd(gf, taps.astype(g.dtype), gx)
        return from_last(gx.reshape(gl.shape))

    return Node(out_v, ((a, back),))


def gaussian_taps(sigma: float, dtype=None) -> np.ndarray:
    """Normalized Gaussian taps with radius ceil(3*sigma) (min 1)."""
    dtype = dtype or current_dtype()
    r = max(1, int(np.ceil(3.0 * float(sigma))))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    t = np.exp(-(xs * xs) / (2.0 * float(sigma) ** 2))
    t /= t.sum()
    return t.astype(dtype)


def gaussian_separable(a, sigma: float) -> Node:
    """Isotropic Gaussian smoothing over the two trailing axes."""
    a = as_node(a)
    t = gaussian_taps(sigma, a.value.dtype)
    return conv1d(conv1d(a, t, axis=-1), t, axis=-2)


# -------------------------------------------------------------- grid sample

def grid_sample_bilinear(image, grid) -> Node:
    """Sample image (C,H,W) at pixel-unit positions grid (2, *S) -> (C, *S).

    grid[0] holds x (column) coordinates, grid[1] y (row). Positions clamp
    to the image rectangle; where clamping fires, the coordinate gradient
    is zeroed (the sampled value no longer responds to the raw coordinate).
    """
    image, grid = as_node(image), as_node(grid)
    img_v = image.value
    if img_v.ndim != 3:
        raise ValueError("image must be (C,H,W)")
    gv = grid.value
    if gv.shape[0] != 2:
        raise ValueError("grid must have leading axis of size 2 (x,y)")
    C, H, W = img_v.shape
    spatial = gv.shape[1:]
    gx = np.ascontiguousarray(gv[0].reshape(-1))
    gy = np.ascontiguousarray(gv[1].reshape(-1))
    P = gx.shape[0]
    out = np.empty((C, P), dtype=img_v.dtype)
    _k.grid_sample_fwd(img_v, gx, gy, out)
    if _state["trace"] is not None:
        cells = np.empty(P, dtype=np.int64)
        _k.grid_cells(gx, gy, H, W, cells)
        record_branch(cells)

    state = {}

    def run_bwd(g):
        # one fused kernel produces both image and grid gradients; memoize
        # (holding g itself, so the key cannot be recycled) so the two
        # parent rules share a single pass over the samples
        if state.get("gref") is not g:
            gc = np.ascontiguousarray(g.reshape(C, P))
            gimg = np.zeros_like(img_v)
            ggx = np.zeros(P, dtype=img_v.dtype)
            ggy = np.zeros(P, dtype=img_v.dtype)
            _k.grid_sample_bwd(img_v, gx, gy, gc, gimg, ggx, ggy)
            state["gref"] = g
            state["gimg"] = gimg
            state["ggrid"] = np.stack([ggx, ggy]).reshape((2,) + spatial)
        return state

    parents = (
        (image, lambda g: run_bwd(g)["gimg"]),
        (grid, lambda g: run_bwd(g)["ggrid"]),
    )
    return Node(out.reshape((C,) + spatial), parents)


def line_filter(image, direction, sinv, rinv, ncut, d_eff: int) -> Node:
    """Normalized average of bilinear samples along x + k*direction(x).

    Per pixel, k runs over |k| <= min(ncut, d_eff) and each sample is
    weighted by exp(k^2*|d|^2*sinv + dist2*rinv), where dist2 is the squared
    color distance of the sample to the center pixel. The k=0 weight is
    exactly 1 and the normalizer is guarded at 1e-8.

    image: (C,H,W); direction: (2,H,W); sinv/rinv: 0-d or (H,W) exponent
    coefficients (pass -0.5/sigma^2); rinv=None drops the color-range term.
    ncut: plain (H,W) per-pixel cutoff; d_eff: global sample cap.
    """
    image, direction, sinv = as_node(image), as_node(direction), as_node(sinv)
    img_v = image.value
    C, H, W = img_v.shape
    dt = img_v.dtype
    dx = np.ascontiguousarray(direction.value[0])
    dy = np.ascontiguousarray(direction.value[1])
    ncut_i = np.ascontiguousarray(np.asarray(ncut), dtype=np.int32)
    d_eff = max(int(d_eff), 0)
    ks = np.arange(-d_eff, d_eff + 1, dtype=dt)

    def full(node):
        v = node.value
        return np.full((H, W), v, dt) if v.ndim == 0 \
            else np.ascontiguousarray(v)

    sinv_a = full(sinv)
    use_range = rinv is not None
    rinv = as_node(rinv) if use_range else None
    rinv_a = full(rinv) if use_range else np.zeros((H, W), dt)

    # kernels run channel-interleaved; transposes at the boundary are cheap
    img_t = np.ascontiguousarray(np.moveaxis(img_v, 0, 2))
    out_t = np.empty((H, W, C), dtype=dt)
    den = np.empty((H, W), dtype=dt)
    stash = _state["grad"]
    K = ks.shape[0]
    wbuf = np.empty((H, W, K) if stash else (1, 1, 1), dtype=dt)
    fwd_k = {1: _k.line_filter_fwd_mono, 3: _k.line_filter_fwd_rgb}.get(
        C, _k.line_filter_fwd)
    fwd_k(img_t, dx, dy, sinv_a, rinv_a, use_range, stash,
          ncut_i, ks, out_t, den, wbuf)
    out = np.ascontiguousarray(np.moveaxis(out_t, 2, 0))
    record_branch(np.asarray(d_eff))
    record_branch(ncut_i)
    if _state["trace"] is not None:
        cells = np.empty(H * W * ks.shape[0], dtype=np.int64)
        _k.line_filter_cells(dx, dy, ncut_i, ks, H, W, cells)
        record_branch(cells)

    state = {}

    def run_bwd(g):
        if state.get("gref") is not g:
            gimg_t = np.zeros_like(img_t)
            gdx = np.zeros_like(dx)
            gdy = np.zeros_like(dy)
            gsinv = np.zeros((H, W), dtype=dt)
            grinv = np.zeros((H, W), dtype=dt)
            g_t = np.ascontiguousarray(np.moveaxis(g, 0, 2))
            bwd_k = {1: _k.line_filter_bwd_mono,
                     3: _k.line_filter_bwd_rgb}.get(C, _k.line_filter_bwd)
            bwd_k(img_t, dx, dy, sinv_a, rinv_a, use_range,
                  ncut_i, ks, out_t, den, wbuf,
                  g_t, gimg_t, gdx, gdy, gsinv, grinv)
            state["gref"] = g
            state["gimg"] = np.ascontiguousarray(np.moveaxis(gimg_t, 2, 0))
            state["gdir"] = np.stack([gdx, gdy])
            state["gsinv"] = gsinv
            state["grinv"] = grinv
        return state

    def reduced(key, node):
        def rule(g):
            full_g = run_bwd(g)[key]
            return full_g if node.value.ndim else \
                np.asarray(full_g.sum(), dtype=dt)
        return rule

    parents = [
        (image, lambda g: run_bwd(g)["gimg"]),
        (direction, lambda g: run_bwd(g)["gdir"]),
        (sinv, reduced("gsinv", sinv)),
    ]
    if use_range:
        parents.append((rinv, reduced("grinv", rinv)))
    return Node(out, tuple(parents))


# ---------------------------------------------------------------- traversal

def _topo(root: Node) -> list:
    """Reverse-topological order (root first), iterative DFS."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()
    return order


def backward(root: Node, seed=None) -> None:
    """Accumulate d(root)/d(node) into .grad over the whole graph.

    root must be scalar unless an explicit seed (array of root's shape) is
    given. Each node's rules fire exactly once per call; calling backward
    twice doubles the accumulated grads.
    """
    if seed is None:
        if root.value.size != 1:
            raise ValueError("backward() needs a scalar root or explicit seed")
        seed = np.ones_like(root.value)
    else:
        seed = np.asarray(seed, dtype=root.value.dtype)
        if seed.shape != root.value.shape:
            raise ValueError("seed shape must match root shape")

    order = _topo(root)
    adj = {id(root): seed}
    for node in order:
        a = adj.pop(id(node), None)
        if a is None:
            continue
        if node.retain:
            node.grad = a.copy() if node.grad is None else node.grad + a
        for parent, rule in node.parents:
            if not parent.need:
                continue
            contrib = rule(a)
            pid = id(parent)
            if pid in adj:
                adj[pid] = adj[pid] + contrib
            else:
                adj[pid] = contrib


def zero_grads(root: Node) -> None:
    for node in _topo(root):
        node.grad = None


def finite(root: Node) -> bool:
    return bool(np.isfinite(root.value).all())


# --------------------------------------------------------------- checkpoint

def checkpoint(fn: Callable, *inputs) -> Node:
    """Run fn(*inputs) without keeping its internal tape; rebuild on backward.

    fn must be a pure function of its node arguments. Forward runs on
    detached copies and only the output value is kept; the backward rule
    re-executes fn with gradients enabled and reads the input grads off the
    replayed subgraph. Cuts peak tape memory at the price of one extra
    forward per backward.
    """
    inputs = tuple(as_node(x) for x in inputs)
    with no_grad():
        out_v = fn(*(Node(n.value) for n in inputs)).value

    if not _state["grad"]:
        return Node(out_v)

    state = {}

    def replay(g):
        if state.get("gref") is not g:
            old = _state["grad"]
            _state["grad"] = True
            try:
                leaves = tuple(leaf(n.value) for n in inputs)
                out = fn(*leaves)
                backward(out, seed=g)
            finally:
                _state["grad"] = old
            state["gref"] = g
            state["grads"] = tuple(grad_of(l) for l in leaves)
        return state["grads"]

    def make(i):
        return lambda g: replay(g)[i]

    return Node(out_v, tuple((inp, make(i)) for i, inp in enumerate(inputs)))
