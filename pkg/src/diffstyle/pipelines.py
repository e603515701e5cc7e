"""The two stylization pipelines as declarative stage lists plus executors.

Both pipelines share the structure-tensor/tangent-field front end. The
cartoon pipeline splits into a color branch (orientation-aligned bilateral
abstraction, then soft quantization) and an edge branch (flow-guided
difference of Gaussians, thresholded), multiplied together.

Modes:
* "differentiable": tape active, float driven by ambient precision, soft
  quantization, budgeted line sampling.
* "reference": no tape, float64, hard quantization, unbudgeted sampling
  (cutoffs purely from the per-pixel support N(x)). This is the exact
  semantics renders and golden files use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_image
from .filters.color import color_adjust, hard_quantize, luminance, quantize
from .filters.flowfilters import (
    DEFAULT_BUDGET,
    flow_dog,
    orientation_aligned_bilateral,
    xdog_threshold,
)
from .filters.structure import structure_tensor, tangent_field
from .grad import engine as E
from .params import ParamSet, ParamSpec, to_physical

# signed edge responses are small; this affine map expands them to [0,1]
# (clamped), so the threshold parameter has an image-independent range
U_SCALE = 10.0
U_OFFSET = 0.5

# bilateral abstraction rounds per cartoon render
OABF_ITERS = 2

# image area above which "auto" checkpointing turns on
CHECKPOINT_AUTO_AREA = 512 * 512


@dataclass(frozen=True)
class Stage:
    name: str
    op: str
    params: tuple = ()


@dataclass(frozen=True)
class PipelineSpec:
    pipeline_id: str
    specs: dict
    stages: tuple

    def default_params(self) -> ParamSet:
        return ParamSet(self.specs)


def _specs(items) -> dict:
    return {s.name: s for s in items}


XDOG_PARAMS = _specs([
    ParamSpec("sigma_e", 0.3, 4.0, 1.2),
    ParamSpec("tau", 0.8, 1.1, 0.99),
    ParamSpec("epsilon", 0.0, 1.0, 0.4),
    ParamSpec("phi", 0.5, 50.0, 10.0),
    ParamSpec("sigma_m", 0.5, 6.0, 2.0),
])

CARTOON_PARAMS = _specs([
    ParamSpec("saturation", 0.0, 2.0, 1.0),
    ParamSpec("contrast", 0.5, 2.0, 1.0),
    ParamSpec("gamma", 0.5, 2.2, 1.0),
    ParamSpec("sigma_d", 0.5, 6.0, 3.0),
    ParamSpec("sigma_r", 0.02, 0.5, 0.1),
    ParamSpec("sigma_e", 0.3, 4.0, 1.2),
    ParamSpec("tau", 0.8, 1.1, 0.99),
    ParamSpec("epsilon", 0.0, 1.0, 0.4),
    ParamSpec("phi", 0.5, 50.0, 10.0),
    ParamSpec("sigma_m", 0.5, 6.0, 2.0),
    ParamSpec("bins", 2.0, 32.0, 8.0, maskable=False),
    ParamSpec("softness", 0.0, 20.0, 8.0),
])


def xdog_pipeline() -> PipelineSpec:
    stages = (
        Stage("structure", "structure_tensor"),
        Stage("flow", "tangent_field"),
        Stage("edge_response", "flow_dog", ("sigma_e", "tau", "sigma_m")),
        Stage("threshold", "xdog_threshold", ("epsilon", "phi")),
    )
    return PipelineSpec("xdog", XDOG_PARAMS, stages)


def cartoon_pipeline() -> PipelineSpec:
    stages = (
        Stage("color", "color_adjust", ("saturation", "contrast", "gamma")),
        Stage("structure", "structure_tensor"),
        Stage("flow", "tangent_field"),
        Stage("abstraction", "orientation_aligned_bilateral",
              ("sigma_d", "sigma_r")),
        Stage("edge_response", "flow_dog", ("sigma_e", "tau", "sigma_m")),
        Stage("threshold", "xdog_threshold", ("epsilon", "phi")),
        Stage("quantize", "quantize", ("bins", "softness")),
        Stage("composite", "multiply"),
    )
    return PipelineSpec("cartoon", CARTOON_PARAMS, stages)


_PIPELINES = {"xdog": xdog_pipeline, "cartoon": cartoon_pipeline}


def get_pipeline(pipeline_id: str) -> PipelineSpec:
    if pipeline_id not in _PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline_id!r}; "
                         f"choose from {sorted(_PIPELINES)}")
    spec = _PIPELINES[pipeline_id]()
    validate_spec(spec)
    return spec


def validate_spec(spec: PipelineSpec) -> None:
    """Every registry parameter must be bound by exactly one stage."""
    bound: list = []
    for st in spec.stages:
        for p in st.params:
            if p not in spec.specs:
                raise ValueError(f"stage {st.name!r} binds unknown param {p!r}")
            bound.append(p)
    dupes = {p for p in bound if bound.count(p) > 1}
    if dupes:
        raise ValueError(f"parameters bound more than once: {sorted(dupes)}")
    missing = set(spec.specs) - set(bound)
    if missing:
        raise ValueError(f"parameters not bound by any stage: {sorted(missing)}")


def rescale_edge_response(u) -> E.Node:
    return E.clamp(E.add(E.mul(u, U_SCALE), U_OFFSET), 0.0, 1.0)


@dataclass
class RenderResult:
    output: np.ndarray
    node: E.Node | None = None
    leaves: dict | None = None
    phys: dict | None = None
    image_leaf: E.Node | None = None


def randomize_params(spec: PipelineSpec, seed: int, margin: float = 0.1) -> ParamSet:
    """Uniform normalized values in [-0.5+margin, 0.5-margin]."""
    rng = np.random.default_rng(seed)
    ps = spec.default_params()
    for name in spec.specs:
        lo, hi = -0.5 + margin, 0.5 - margin
        ps.set_scalar(name, normalized=float(rng.uniform(lo, hi)))
    return ps


def _maybe_ckpt(enabled: bool, fn, *nodes) -> E.Node:
    if enabled:
        return E.checkpoint(fn, *nodes)
    return fn(*nodes)


def _exec_xdog(image, phys, budget, ckpt) -> E.Node:
    lum = luminance(image)
    st = structure_tensor(image)
    tf = tangent_field(st, "unit")
    u = _maybe_ckpt(ckpt,
                    lambda im, t, se, ta, sm: flow_dog(
                        im, _tf_of(t), se, ta, sm, budget),
                    lum, tf.t, phys["sigma_e"], phys["tau"], phys["sigma_m"])
    return xdog_threshold(rescale_edge_response(u), phys["epsilon"], phys["phi"])


def _tf_of(t_node):
    from .filters.structure import TangentField
    return TangentField(t=t_node)


def _exec_cartoon(image, phys, budget, ckpt) -> E.Node:
    adj = color_adjust(image, phys["saturation"], phys["contrast"],
                       phys["gamma"])
    st = structure_tensor(adj)
    tf = tangent_field(st, "unit")
    ab = adj
    for _ in range(OABF_ITERS):
        ab = _maybe_ckpt(ckpt,
                         lambda im, t, sd, sr: orientation_aligned_bilateral(
                             im, _tf_of(t), sd, sr, budget, n_iters=1),
                         ab, tf.t, phys["sigma_d"], phys["sigma_r"])
    lum = luminance(ab)
    u = _maybe_ckpt(ckpt,
                    lambda im, t, se, ta, sm: flow_dog(
                        im, _tf_of(t), se, ta, sm, budget),
                    lum, tf.t, phys["sigma_e"], phys["tau"], phys["sigma_m"])
    edges = xdog_threshold(rescale_edge_response(u), phys["epsilon"],
                           phys["phi"])
    colors = quantize(ab, phys["bins"], phys["softness"])
    return E.mul(colors, edges)


_EXECUTORS = {"xdog": _exec_xdog, "cartoon": _exec_cartoon}


def run_pipeline(spec: PipelineSpec, image, params: ParamSet | None = None,
                 mode: str = "differentiable",
                 budget: int | None = DEFAULT_BUDGET,
                 checkpoint: str | bool = "auto") -> RenderResult:
    """Render `image` (C,H,W in [0,1]) under `params`.

    differentiable mode returns a RenderResult whose .node is the live
    output and .leaves the normalized parameter leaves; reference mode
    returns only the float64 output array, computed without a tape, with
    hard quantization and no sample budget.
    """
    image = check_image(np.asarray(image))
    if params is None:
        params = spec.default_params()
    if set(params.specs) != set(spec.specs):
        raise ValueError("parameter set does not match this pipeline's registry")
    h, w = image.shape[1:]
    if checkpoint == "auto":
        ckpt = h * w > CHECKPOINT_AUTO_AREA
    else:
        ckpt = bool(checkpoint)

    if mode == "reference":
        with E.precision("float64"), E.no_grad():
            leaves, phys = to_physical(params, (h, w))
            img_node = E.constant(image.astype(np.float64))
            out = _exec_reference(spec, img_node, params, phys)
            return RenderResult(output=out.value)
    if mode != "differentiable":
        raise ValueError(f"unknown mode {mode!r}")

    leaves, phys = to_physical(params, (h, w))
    img_node = E.leaf(image)
    out = _EXECUTORS[spec.pipeline_id](img_node, phys, budget, ckpt)
    return RenderResult(output=out.value, node=out, leaves=leaves, phys=phys,
                        image_leaf=img_node)


def _exec_reference(spec, image, params: ParamSet, phys) -> E.Node:
    if spec.pipeline_id == "xdog":
        return _exec_xdog(image, phys, None, False)
    adj = color_adjust(image, phys["saturation"], phys["contrast"],
                       phys["gamma"])
    st = structure_tensor(adj)
    tf = tangent_field(st, "unit")
    ab = orientation_aligned_bilateral(adj, tf, phys["sigma_d"],
                                       phys["sigma_r"], None,
                                       n_iters=OABF_ITERS)
    lum = luminance(ab)
    u = flow_dog(lum, tf, phys["sigma_e"], phys["tau"], phys["sigma_m"], None)
    edges = xdog_threshold(rescale_edge_response(u), phys["epsilon"],
                           phys["phi"])
    colors = E.constant(hard_quantize(ab.value,
                                      float(E.detach(phys["bins"]))))
    return E.mul(colors, edges)
