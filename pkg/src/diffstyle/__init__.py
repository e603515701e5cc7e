"""diffstyle: differentiable image stylization with fittable parameters.

Two pipelines (xdog line drawings, cartoon abstraction) built from
reverse-mode differentiable filters, an Adam-based parameter/mask fitter,
a CLI, an HTTP service, and sklearn-style estimator wrappers.
"""

from . import grad
from .metrics import psnr, ssim
from .optimize import (
    NumericalFailure,
    OptimizeConfig,
    OptimizeReport,
    functional_benchmark,
    optimize,
    promote_to_mask,
)
from .params import ParamSet, ParamSpec
from .pipelines import (
    PipelineSpec,
    RenderResult,
    cartoon_pipeline,
    get_pipeline,
    randomize_params,
    run_pipeline,
    xdog_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "grad", "ssim", "psnr",
    "OptimizeConfig", "OptimizeReport", "NumericalFailure",
    "optimize", "functional_benchmark", "promote_to_mask",
    "ParamSet", "ParamSpec",
    "PipelineSpec", "RenderResult", "get_pipeline", "run_pipeline",
    "xdog_pipeline", "cartoon_pipeline", "randomize_params",
    "__version__",
]

from .estimators import CartoonStylizer, XDoGStylizer  # noqa: E402

__all__ += ["CartoonStylizer", "XDoGStylizer"]
