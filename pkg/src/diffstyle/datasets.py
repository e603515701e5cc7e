"""Bundled images: a demo input, benchmark corpus, and stylized targets.

All assets are deterministic synthetic 256x256 compositions committed as
PNGs under diffstyle/data/ (see scripts/make_assets.py in the repository).
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from . import imageio

BENCHMARK_NAMES = ("bench_blobs", "bench_rings", "bench_patches", "bench_waves")
STYLIZED_TARGET_NAMES = ("target_poster", "target_edges", "target_smooth")
DEMO_NAME = "bench_blobs"


def _data_path(name: str):
    return resources.files("diffstyle").joinpath("data", f"{name}.png")


def load_bundled(name: str) -> np.ndarray:
    """Load one bundled PNG as (C,H,W) float32 in [0,1]."""
    path = _data_path(name)
    with resources.as_file(path) as p:
        return imageio.read_image(p)


def benchmark_images() -> dict:
    return {name: load_bundled(name) for name in BENCHMARK_NAMES}


def stylized_targets() -> dict:
    return {name: load_bundled(name) for name in STYLIZED_TARGET_NAMES}


def demo_image() -> np.ndarray:
    return load_bundled(DEMO_NAME)
