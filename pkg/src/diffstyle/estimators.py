"""sklearn-style wrappers around the functional pipeline API.

fit(X, y) optimizes pipeline parameters so transform(X) approximates y;
transform/predict render with the fitted (or default) parameters. X and y
are single (C,H,W) float images in [0,1], or sequences of them (the first
pair drives fit; transform maps over all).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image
from .optimize import OptimizeConfig, optimize
from .pipelines import get_pipeline, run_pipeline


def _as_image_list(X) -> tuple:
    """Returns (list of (C,H,W) images, was_single flag)."""
    if isinstance(X, np.ndarray) and X.ndim in (2, 3):
        return [check_image(X)], True
    if isinstance(X, np.ndarray) and X.ndim == 4:
        return [check_image(x) for x in X], False
    return [check_image(x) for x in X], False


class _Stylizer(BaseEstimator, TransformerMixin):
    """Shared estimator plumbing; subclasses pin the pipeline."""

    _pipeline_id = ""

    def __init__(self, iterations=1000, lr=0.1, loss="l2", tv_weight=0.0,
                 budget=8, seed=0, free_params=None, checkpoint=False,
                 mode="reference"):
        self.iterations = iterations
        self.lr = lr
        self.loss = loss
        self.tv_weight = tv_weight
        self.budget = budget
        self.seed = seed
        self.free_params = free_params
        self.checkpoint = checkpoint
        self.mode = mode

    def _config(self) -> OptimizeConfig:
        return OptimizeConfig(
            iterations=self.iterations, lr=self.lr, loss=self.loss,
            tv_weight=self.tv_weight, budget=self.budget, seed=self.seed,
            free_params=tuple(self.free_params) if self.free_params else None,
            checkpoint=self.checkpoint)

    def fit(self, X, y, params0=None):
        """Optimize parameters so the pipeline maps X toward y."""
        spec = get_pipeline(self._pipeline_id)
        images, _ = _as_image_list(X)
        targets, _ = _as_image_list(y)
        if len(images) != len(targets):
            raise ValueError("X and y must pair up")
        self.params_, self.report_ = optimize(
            spec, images[0], targets[0], params0, self._config())
        return self

    def transform(self, X):
        spec = get_pipeline(self._pipeline_id)
        params = getattr(self, "params_", None)
        images, single = _as_image_list(X)
        outs = [run_pipeline(spec, img, params, self.mode,
                             budget=self.budget).output for img in images]
        return outs[0] if single else outs

    def predict(self, X):
        return self.transform(X)


class XDoGStylizer(_Stylizer):
    """Line-drawing stylization (thresholded flow-guided edge response)."""

    _pipeline_id = "xdog"


class CartoonStylizer(_Stylizer):
    """Cartoon stylization (abstracted colors, quantization, dark edges)."""

    _pipeline_id = "cartoon"
