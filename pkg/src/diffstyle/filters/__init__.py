"""Differentiable image filters."""

from .color import color_adjust, hard_quantize, luminance, quantize
from .flowfilters import (
    DEFAULT_BUDGET,
    K_FACTOR,
    flow_dog,
    flow_gaussian,
    oabf_pass,
    orientation_aligned_bilateral,
    xdog_threshold,
)
from .structure import (
    SIGMA_ST,
    TangentField,
    sobel_gradients,
    structure_tensor,
    tangent_field,
)

__all__ = [
    "color_adjust", "hard_quantize", "luminance", "quantize",
    "flow_dog", "flow_gaussian", "oabf_pass",
    "orientation_aligned_bilateral", "xdog_threshold",
    "sobel_gradients", "structure_tensor", "tangent_field", "TangentField",
    "DEFAULT_BUDGET", "K_FACTOR", "SIGMA_ST",
]
