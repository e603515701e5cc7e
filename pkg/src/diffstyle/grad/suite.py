"""Finite-difference sweep over the whole differentiable surface.

One named check per operation, plus one per pipeline and a negative
control whose backward is deliberately wrong (the sweep must catch it).
Every check draws fresh random inputs per trial and compares tape
gradients against central differences in float64. The test suite and the
command-line gradcheck both run through `run_suite`.
"""

from __future__ import annotations

import numpy as np

from . import engine as E
from .checking import CheckReport, grad_check, grad_check_multi

# checks expected to report a gradient mismatch
EXPECT_FAIL = frozenset({"negative_control"})


def _scalarize(rng, shape):
    """Weighted-sum reducer with weights frozen per trial, so the finite
    difference probes and the tape see the same function."""
    w = rng.standard_normal(shape)

    def wsum(node):
        return E.sum_all(E.mul(node, E.constant(w)))

    return wsum


def _u(rng, shape, lo, hi):
    return rng.uniform(lo, hi, shape)


# --------------------------------------------------------------- op trials
# Each trial function takes an rng and returns a CheckReport for one fresh
# random input. Shapes stay small; the runner repeats trials.

def _t_add(rng):
    arrs = {"a": _u(rng, (3, 7), -2, 2), "b": _u(rng, (7,), -2, 2)}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.add(n["a"], n["b"])), arrs, name="add")


def _t_sub(rng):
    arrs = {"a": _u(rng, (3, 7), -2, 2), "b": np.float64(rng.uniform(-2, 2))}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.sub(n["a"], n["b"])), arrs, name="sub")


def _t_mul(rng):
    arrs = {"a": _u(rng, (3, 7), -2, 2), "b": _u(rng, (3, 7), -2, 2)}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.mul(n["a"], n["b"])), arrs, name="mul")


def _t_div(rng):
    b = _u(rng, (3, 7), 0.4, 1.4) * rng.choice([-1.0, 1.0], (3, 7))
    arrs = {"a": _u(rng, (3, 7), -2, 2), "b": b}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.div(n["a"], n["b"])), arrs, name="div")


def _t_pow(rng):
    arrs = {"a": _u(rng, (3, 7), 0.2, 2.0),
            "b": np.float64(rng.uniform(0.5, 2))}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.pow_(n["a"], n["b"])), arrs, name="pow")


def _t_exp(rng):
    x = _u(rng, (3, 7), -3, 3)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(E.exp(v)), x, name="exp")


def _t_tanh(rng):
    x = _u(rng, (3, 7), -3, 3)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(E.tanh(v)), x, name="tanh")


def _t_sqrt(rng):
    x = _u(rng, (3, 7), 0.1, 2.0)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(E.sqrt(v)), x, name="sqrt")


def _t_abs(rng):
    x = _u(rng, (3, 7), -2, 2)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(E.abs_(v)), x, name="abs")


def _t_sign(rng):
    x = _u(rng, (3, 7), -2, 2)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(E.sign(v)), x, name="sign")


def _t_clamp(rng):
    x = _u(rng, (3, 7), -0.5, 1.5)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(E.clamp(v, 0.0, 1.0)), x, name="clamp")


def _t_minimum(rng):
    arrs = {"a": _u(rng, (3, 7), -1, 1), "b": _u(rng, (3, 7), -1, 1)}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.minimum(n["a"], n["b"])), arrs, name="minimum")


def _t_maximum(rng):
    arrs = {"a": _u(rng, (3, 7), -1, 1), "b": _u(rng, (3, 7), -1, 1)}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.maximum(n["a"], n["b"])), arrs, name="maximum")


def _t_select(rng):
    cond = rng.random((3, 7)) > 0.5
    arrs = {"a": _u(rng, (3, 7), -1, 1), "b": _u(rng, (3, 7), -1, 1)}
    ws = _scalarize(rng, (3, 7))
    return grad_check_multi(
        lambda n: ws(E.select(cond, n["a"], n["b"])), arrs, name="select")


def _t_reshape(rng):
    x = _u(rng, (3, 8), -1, 1)
    ws = _scalarize(rng, (4, 6))
    return grad_check(lambda v: ws(E.reshape(v, (4, 6))), x, name="reshape")


def _t_unsqueeze_last(rng):
    x = _u(rng, (5,), -1, 1)
    ws = _scalarize(rng, (5, 1))
    return grad_check(lambda v: ws(E.unsqueeze_last(v)), x,
                      name="unsqueeze_last")


def _t_narrow(rng):
    x = _u(rng, (4, 9), -1, 1)
    ws = _scalarize(rng, (4, 5))
    return grad_check(lambda v: ws(E.narrow(v, 1, 2, 5)), x, name="narrow")


def _t_concat(rng):
    arrs = {"a": _u(rng, (2, 5), -1, 1), "b": _u(rng, (3, 5), -1, 1)}
    ws = _scalarize(rng, (5, 5))
    return grad_check_multi(
        lambda n: ws(E.concat([n["a"], n["b"]], 0)), arrs, name="concat")


def _t_stack_first(rng):
    arrs = {k: _u(rng, (4, 4), -1, 1) for k in ("a", "b", "c")}
    ws = _scalarize(rng, (3, 4, 4))
    return grad_check_multi(
        lambda n: ws(E.stack_first([n["a"], n["b"], n["c"]])),
        arrs, name="stack_first")


def _t_sum_all(rng):
    return grad_check(lambda x: E.sum_all(x),
                      _u(rng, (6, 6), -1, 1), name="sum_all")


def _t_mean_all(rng):
    return grad_check(lambda x: E.mean_all(x),
                      _u(rng, (5, 7), -1, 1), name="mean_all")


def _t_sum_last(rng):
    x = _u(rng, (4, 6), -1, 1)
    ws = _scalarize(rng, (4,))
    return grad_check(lambda v: ws(E.sum_last(v)), x, name="sum_last")


def _t_sum_channels(rng):
    x = _u(rng, (3, 5, 5), -1, 1)
    ws = _scalarize(rng, (1, 5, 5))
    return grad_check(lambda v: ws(E.sum_channels(v)), x,
                      name="sum_channels")


def _t_conv1d(rng):
    taps = rng.standard_normal(5)
    taps /= np.abs(taps).sum()
    x = _u(rng, (2, 12), -1, 1)
    ws = _scalarize(rng, (2, 12))
    return grad_check(lambda v: ws(E.conv1d(v, taps, axis=-1)), x,
                      name="conv1d")


def _t_gaussian_separable(rng):
    x = _u(rng, (1, 12, 12), -1, 1)
    ws = _scalarize(rng, (1, 12, 12))
    return grad_check(lambda v: ws(E.gaussian_separable(v, 1.3)), x,
                      name="gaussian_separable")


def _t_grid_sample(rng):
    img = _u(rng, (2, 10, 10), 0, 1)
    # a few coordinates past the edges, to land on the clamp branches
    grid = _u(rng, (2, 6, 6), -1.0, 10.0)
    arrs = {"image": img, "grid": grid}
    ws = _scalarize(rng, (2, 6, 6))
    return grad_check_multi(
        lambda n: ws(E.grid_sample_bilinear(n["image"], n["grid"])),
        arrs, name="grid_sample_bilinear")


def _t_line_filter(rng):
    # color-distance term on, per-pixel exponent coefficients
    h = w = 8
    ncut = np.full((h, w), 3, dtype=np.int32)
    arrs = {
        "image": _u(rng, (3, h, w), 0, 1),
        "direction": _u(rng, (2, h, w), -1.2, 1.2),
        "sinv": _u(rng, (h, w), -1.5, -0.3),
        "rinv": _u(rng, (h, w), -30.0, -5.0),
    }
    ws = _scalarize(rng, (3, h, w))
    return grad_check_multi(
        lambda n: ws(E.line_filter(n["image"], n["direction"], n["sinv"],
                                   n["rinv"], ncut, 3)),
        arrs, name="line_filter")


def _t_line_filter_plain(rng):
    # no range term, scalar exponent coefficient, varying cutoffs
    h = w = 8
    ncut = rng.integers(0, 4, (h, w)).astype(np.int32)
    arrs = {
        "image": _u(rng, (1, h, w), 0, 1),
        "direction": _u(rng, (2, h, w), -1.2, 1.2),
        "sinv": np.float64(rng.uniform(-1.5, -0.3)),
    }
    ws = _scalarize(rng, (1, h, w))
    return grad_check_multi(
        lambda n: ws(E.line_filter(n["image"], n["direction"], n["sinv"],
                                   None, ncut, 3)),
        arrs, name="line_filter_plain")


def _t_checkpoint(rng):
    arrs = {"a": _u(rng, (4, 4), -1, 1), "b": _u(rng, (4, 4), -1, 1)}
    ws = _scalarize(rng, (4, 4))

    def build(n):
        out = E.checkpoint(lambda x, y: E.tanh(E.mul(x, y)), n["a"], n["b"])
        return ws(out)

    return grad_check_multi(build, arrs, name="checkpoint")


def _t_quantize_smooth(rng):
    # image and softness paths of soft quantization (the bin-count path has
    # a search rule instead of a derivative and its own dedicated tests)
    from ..filters.color import quantize
    arrs = {"image": _u(rng, (1, 6, 6), 0.05, 0.95),
            "softness": np.float64(rng.uniform(2.0, 8.0))}
    ws = _scalarize(rng, (1, 6, 6))
    return grad_check_multi(
        lambda n: ws(quantize(n["image"], E.constant(np.float64(6.0)),
                              n["softness"])),
        arrs, name="quantize_smooth")


def _t_negative_control(rng):
    # intentionally wrong backward (5% off); the sweep must flag it
    def bad_scale(a):
        a = E.as_node(a)
        return E.Node(a.value * 2.0, ((a, lambda g: g * 2.1),))

    x = _u(rng, (3, 7), -1, 1)
    ws = _scalarize(rng, (3, 7))
    return grad_check(lambda v: ws(bad_scale(v)), x, name="negative_control")


# --------------------------------------------------------- pipeline trials

def _smooth_image(rng, c: int, h: int, w: int) -> np.ndarray:
    """Random low-frequency image. White noise saturates the edge response
    (clamp and tanh go flat, every gradient is zero and the check proves
    nothing); smooth fields keep it in the responsive range."""
    base = rng.random((c, h // 4 + 2, w // 4 + 2))
    img = np.kron(base, np.ones((1, 4, 4)))[:, :h, :w]
    k = np.ones(5) / 5.0
    for ax in (1, 2):
        img = np.apply_along_axis(
            lambda v: np.convolve(v, k, mode="same"), ax, img)
    return np.clip(img, 0.0, 1.0)


def _pipeline_trial(pipeline_id: str, rng) -> CheckReport:
    """One random 16x16 image + random parameter point, FD over every
    differentiable scalar parameter and a 6-pixel probe of the image."""
    from ..pipelines import _EXECUTORS, get_pipeline

    spec = get_pipeline(pipeline_id)
    h = w = 16
    c = 1 if pipeline_id == "xdog" else 3
    img = _smooth_image(rng, c, h, w)
    normvals = {n: float(rng.uniform(-0.35, 0.35)) for n in spec.specs}
    names = [n for n, ps in spec.specs.items()
             if ps.differentiable and n != "bins"]

    flat = img.reshape(-1)
    probe_at = (h // 2) * w + 3  # middle row, away from the border
    pre = flat[:probe_at].copy()
    post = flat[probe_at + 6:].copy()

    def build(nodes):
        phys = {}
        for n, ps in spec.specs.items():
            node = nodes.get(n)
            if node is None:
                node = E.constant(np.float64(normvals[n]))
            phys[n] = E.add(
                E.mul(E.add(node, E.constant(np.float64(0.5))),
                      E.constant(np.float64(ps.span))),
                E.constant(np.float64(ps.lo)))
        image = E.reshape(
            E.concat([E.constant(pre), nodes["image6"], E.constant(post)], 0),
            (c, h, w))
        out = _EXECUTORS[pipeline_id](image, phys, 4, False)
        return E.sum_all(E.mul(out, out))

    arrs = {n: np.float64(normvals[n]) for n in names}
    arrs["image6"] = flat[probe_at:probe_at + 6].copy()
    return grad_check_multi(build, arrs, name=f"pipeline_{pipeline_id}")


def _t_pipeline_xdog(rng):
    return _pipeline_trial("xdog", rng)


def _t_pipeline_cartoon(rng):
    return _pipeline_trial("cartoon", rng)


# -------------------------------------------------------------- the runner

OP_CHECKS = {
    "add": _t_add,
    "sub": _t_sub,
    "mul": _t_mul,
    "div": _t_div,
    "pow": _t_pow,
    "exp": _t_exp,
    "tanh": _t_tanh,
    "sqrt": _t_sqrt,
    "abs": _t_abs,
    "sign": _t_sign,
    "clamp": _t_clamp,
    "minimum": _t_minimum,
    "maximum": _t_maximum,
    "select": _t_select,
    "reshape": _t_reshape,
    "unsqueeze_last": _t_unsqueeze_last,
    "narrow": _t_narrow,
    "concat": _t_concat,
    "stack_first": _t_stack_first,
    "sum_all": _t_sum_all,
    "mean_all": _t_mean_all,
    "sum_last": _t_sum_last,
    "sum_channels": _t_sum_channels,
    "conv1d": _t_conv1d,
    "gaussian_separable": _t_gaussian_separable,
    "grid_sample_bilinear": _t_grid_sample,
    "line_filter": _t_line_filter,
    "line_filter_plain": _t_line_filter_plain,
    "checkpoint": _t_checkpoint,
    "quantize_smooth": _t_quantize_smooth,
    "pipeline_xdog": _t_pipeline_xdog,
    "pipeline_cartoon": _t_pipeline_cartoon,
    "negative_control": _t_negative_control,
}


def run_suite(names=None, trials: int = 20, seed: int = 0,
              progress=None) -> list:
    """Run every check `trials` times on fresh random inputs.

    Returns one aggregated CheckReport per name (worst max_rel, summed
    counts). A report for a name in EXPECT_FAIL passing would mean the
    sweep lost its teeth; suite_ok handles that inversion.
    """
    if names is None:
        names = list(OP_CHECKS)
    unknown = [n for n in names if n not in OP_CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    reports = []
    for name in names:
        fn = OP_CHECKS[name]
        rng = np.random.default_rng(np.random.SeedSequence([seed, hash(name) & 0x7FFFFFFF]))
        worst = None
        checked = 0
        skipped = 0
        for _ in range(trials):
            rep = fn(rng)
            checked += rep.n_checked
            skipped += rep.n_skipped
            if worst is None or rep.max_rel > worst.max_rel:
                worst = rep
        agg = CheckReport(name=name, max_rel=worst.max_rel,
                          n_checked=checked, n_skipped=skipped,
                          worst_coord=worst.worst_coord)
        reports.append(agg)
        if progress is not None:
            progress(agg)
    return reports


def suite_ok(reports) -> bool:
    """True when every check behaves as intended (controls must fail)."""
    return all((not r.ok) if r.name in EXPECT_FAIL else r.ok
               for r in reports)
