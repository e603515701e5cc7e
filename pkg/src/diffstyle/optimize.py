"""Gradient-based parameter fitting: Adam over the normalized domain.

Each iteration renders the differentiable pipeline, measures a pixel loss
against the target (plus optional total-variation pressure on masks),
backpropagates to the normalized parameter leaves, takes one Adam step,
and projects back into [-0.5, 0.5]. The best iterate by loss is returned,
not the last. Everything is deterministic for a fixed config and inputs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .grad import engine as E
from .losses import LOSSES, tv_loss
from .metrics import psnr, ssim
from .params import ParamSet, gaussian_smooth_array, mask_shape
from .pipelines import PipelineSpec, randomize_params, run_pipeline


class NumericalFailure(RuntimeError):
    """Raised when the loss or its gradients go non-finite."""


@dataclass
class OptimizeConfig:
    iterations: int = 1000
    lr: float = 0.1
    loss: str = "l2"
    tv_weight: float = 0.0
    budget: int = 8
    free_params: tuple | None = None
    checkpoint: bool | str = False
    seed: int = 0
    lr_decay: float = 0.98
    lr_decay_every: int = 5
    lr_decay_start: int = 50
    mask_smooth_iters: tuple = (10, 25, 50, 100, 250, 500)
    mask_smooth_sigma: float = 3.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


def lr_at(cfg: OptimizeConfig, i: int) -> float:
    """Step size at iteration i: cfg.lr until lr_decay_start, then one
    factor of lr_decay per lr_decay_every iterations."""
    if i < cfg.lr_decay_start:
        return cfg.lr
    k = (i - cfg.lr_decay_start) // cfg.lr_decay_every + 1
    return cfg.lr * cfg.lr_decay ** k


def adam_update(m, v, g, t: int, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> tuple:
    """One Adam step. Returns (m', v', step); apply as x -= step.

    t is the 1-based step count for bias correction.
    """
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * g * g
    mh = m / (1.0 - beta1 ** t)
    vh = v / (1.0 - beta2 ** t)
    return m, v, lr * mh / (np.sqrt(vh) + eps)


@dataclass
class OptimizeReport:
    loss_history: list = field(default_factory=list)
    best_loss: float = np.inf
    best_iteration: int = -1
    best_output: np.ndarray | None = None
    seconds: float = 0.0
    metrics: dict = field(default_factory=dict)


def _free_names(spec: PipelineSpec, cfg: OptimizeConfig) -> list:
    names = [n for n, s in spec.specs.items() if s.differentiable]
    if cfg.free_params is not None:
        unknown = set(cfg.free_params) - set(spec.specs)
        if unknown:
            raise ValueError(f"free_params not in registry: {sorted(unknown)}")
        names = [n for n in names if n in cfg.free_params]
    if not names:
        raise ValueError("no free parameters to optimize")
    return names


def optimize(spec: PipelineSpec, image: np.ndarray, target: np.ndarray,
             params0: ParamSet | None = None,
             cfg: OptimizeConfig | None = None,
             callback=None) -> tuple:
    """Fit parameters so the rendered image matches `target`.

    Returns (best ParamSet, OptimizeReport). callback, if given, is called
    as callback(iteration, loss_value, current ParamSet) after each step.
    """
    cfg = cfg or OptimizeConfig()
    pset = (params0 or spec.default_params()).copy()
    free = _free_names(spec, cfg)
    target = np.asarray(target)

    m_state = {}
    v_state = {}
    report = OptimizeReport()
    best_pset = pset.copy()
    t0 = time.perf_counter()

    for i in range(cfg.iterations):
        res = run_pipeline(spec, image, pset, "differentiable",
                           budget=cfg.budget, checkpoint=cfg.checkpoint)
        loss_node = LOSSES[cfg.loss](res.node, target)
        free_masks = [res.leaves[n] for n in free if pset.is_mask(n)]
        if cfg.tv_weight > 0.0 and free_masks:
            loss_node = E.add(loss_node,
                              E.mul(tv_loss(free_masks), cfg.tv_weight))
        lv = float(loss_node.value)
        if not np.isfinite(lv):
            raise NumericalFailure(f"loss went non-finite at iteration {i}")
        if lv < report.best_loss:
            report.best_loss = lv
            report.best_iteration = i
            report.best_output = res.output.copy()
            best_pset = pset.copy()
        report.loss_history.append(lv)

        E.backward(loss_node)
        lr = lr_at(cfg, i)
        for name in free:
            g = E.grad_of(res.leaves[name]).astype(np.float64)
            if not np.isfinite(g).all():
                raise NumericalFailure(
                    f"gradient of {name!r} went non-finite at iteration {i}")
            m = m_state.get(name)
            v = v_state.get(name)
            if m is None:
                m = np.zeros_like(g)
                v = np.zeros_like(g)
            m, v, step = adam_update(m, v, g, i + 1, lr, cfg.beta1,
                                     cfg.beta2, cfg.adam_eps)
            m_state[name] = m
            v_state[name] = v
            new = pset.values[name].astype(np.float64) - step
            pset.values[name] = new.astype(np.float32)
        pset.project_()
        if i in cfg.mask_smooth_iters:
            for name in free:
                if pset.is_mask(name):
                    pset.values[name] = gaussian_smooth_array(
                        pset.values[name], cfg.mask_smooth_sigma)
        if callback is not None:
            callback(i, lv, pset)

    report.seconds = time.perf_counter() - t0
    return best_pset, report


def promote_to_mask(pset: ParamSet, name: str, image_hw: tuple) -> None:
    """Turn a scalar parameter into a constant quarter-resolution mask."""
    hm, wm = mask_shape(*image_hw)
    val = float(pset.get_normalized(name))
    pset.set_mask(name, np.full((1, hm, wm), val, dtype=np.float32))


def _bench_one(args) -> dict:
    spec, image, seed, cfg, label = args
    target_params = randomize_params(spec, seed)
    target = run_pipeline(spec, image, target_params, "reference").output
    t0 = time.perf_counter()
    best, report = optimize(spec, image, target.astype(np.float32), None, cfg)
    dt = time.perf_counter() - t0
    out = report.best_output
    return {
        "image": label,
        "seed": seed,
        "ssim": ssim(out, target),
        "psnr": psnr(out, target),
        "final_l1": float(np.abs(out - target).mean()),
        "best_loss": report.best_loss,
        "best_iteration": report.best_iteration,
        "seconds": dt,
    }


def functional_benchmark(spec: PipelineSpec, images: dict,
                         seeds=(0, 1), cfg: OptimizeConfig | None = None,
                         jobs: int = 1) -> dict:
    """Round-trip fit quality over a corpus.

    For each (image, seed): render a target with randomized parameters in
    reference mode, fit from defaults, and score the fitted render against
    the target. images: {label: (C,H,W) array}. Returns per-run rows plus
    aggregate means/mins.
    """
    cfg = cfg or OptimizeConfig()
    work = [(spec, img, seed, cfg, label)
            for label, img in images.items() for seed in seeds]
    if jobs > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(jobs) as pool:
            rows = pool.map(_bench_one, work)
    else:
        rows = [_bench_one(w) for w in work]
    agg = {
        "mean_ssim": float(np.mean([r["ssim"] for r in rows])),
        "min_ssim": float(np.min([r["ssim"] for r in rows])),
        "mean_psnr": float(np.mean([r["psnr"] for r in rows])),
        "min_psnr": float(np.min([r["psnr"] for r in rows])),
        "total_seconds": float(np.sum([r["seconds"] for r in rows])),
    }
    return {"rows": rows, "aggregate": agg}
