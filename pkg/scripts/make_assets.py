"""Regenerate the bundled PNG assets under src/diffstyle/data/.

Everything is deterministic: fixed seeds, no timestamps. The benchmark
corpus is four synthetic 256x256 compositions with distinct structure
(soft blobs, curved rings, flat patches, oriented waves). The stylized
targets are PIL-filtered versions of three of them, standing in for
externally produced stylizations. The golden images are reference-mode
renders at default parameters, used to pin the command-line output
bit-for-bit.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from PIL import Image, ImageFilter, ImageOps

from diffstyle import imageio
from diffstyle.pipelines import get_pipeline, run_pipeline

SIZE = 256


def _grid():
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64) / (SIZE - 1)
    return yy, xx


def bench_blobs() -> np.ndarray:
    rng = np.random.default_rng(101)
    yy, xx = _grid()
    top = np.array([0.93, 0.90, 0.82])
    bot = np.array([0.35, 0.48, 0.62])
    img = top[:, None, None] * (1 - yy) + bot[:, None, None] * yy
    for _ in range(12):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.06, 0.2)
        color = rng.uniform(0.1, 0.95, 3)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        a = np.exp(-d2 / (2 * (r / 2) ** 2))
        img = img * (1 - a) + color[:, None, None] * a
    return np.clip(img, 0, 1)


def bench_rings() -> np.ndarray:
    rng = np.random.default_rng(102)
    yy, xx = _grid()
    img = np.full((3, SIZE, SIZE), 0.92)
    palette = np.array([[0.85, 0.33, 0.25], [0.25, 0.45, 0.75],
                        [0.95, 0.78, 0.30], [0.30, 0.62, 0.45]])
    for k in range(3):
        cy, cx = rng.uniform(0.2, 0.8, 2)
        period = rng.uniform(0.05, 0.11)
        r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        band = 0.5 + 0.5 * np.tanh(6 * np.sin(2 * np.pi * r / period))
        color = palette[k][:, None, None]
        reach = np.exp(-(r / 0.45) ** 2)
        a = band * reach
        img = img * (1 - a) + color * a
    return np.clip(img, 0, 1)


def bench_patches() -> np.ndarray:
    rng = np.random.default_rng(103)
    yy, xx = _grid()
    pts = rng.uniform(0, 1, (24, 2))
    colors = rng.uniform(0.08, 0.95, (24, 3))
    d2 = (yy[None] - pts[:, 0, None, None]) ** 2 \
        + (xx[None] - pts[:, 1, None, None]) ** 2
    label = np.argmin(d2, axis=0)
    img = colors[label].transpose(2, 0, 1)
    shade = 0.9 + 0.2 * xx  # gentle left-right shading across every cell
    return np.clip(img * shade[None], 0, 1)


def bench_waves() -> np.ndarray:
    rng = np.random.default_rng(104)
    yy, xx = _grid()
    phase = np.zeros((SIZE, SIZE))
    for _ in range(3):
        th = rng.uniform(0, np.pi)
        freq = rng.uniform(6, 14)
        phase += np.sin(2 * np.pi * freq * (np.cos(th) * xx + np.sin(th) * yy))
    r = np.sqrt((yy - 0.5) ** 2 + (xx - 0.5) ** 2)
    phase += np.sin(2 * np.pi * 8 * r)
    img = np.stack([
        0.55 + 0.35 * np.sin(phase),
        0.52 + 0.30 * np.sin(phase + 2.1),
        0.58 + 0.32 * np.sin(phase + 4.2),
    ])
    return np.clip(img, 0, 1)


BENCH = {
    "bench_blobs": bench_blobs,
    "bench_rings": bench_rings,
    "bench_patches": bench_patches,
    "bench_waves": bench_waves,
}


def _to_pil(chw: np.ndarray) -> Image.Image:
    q = np.round(np.clip(chw, 0, 1) * 255).astype(np.uint8)
    return Image.fromarray(q.transpose(1, 2, 0), mode="RGB")


def _from_pil(im: Image.Image) -> np.ndarray:
    return np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0


def make_targets(bench: dict) -> dict:
    poster = ImageOps.posterize(_to_pil(bench["bench_blobs"]), 3)
    edges = _to_pil(bench["bench_rings"]) \
        .filter(ImageFilter.EDGE_ENHANCE_MORE) \
        .filter(ImageFilter.SMOOTH)
    smooth = _to_pil(bench["bench_patches"]) \
        .filter(ImageFilter.MedianFilter(7)) \
        .filter(ImageFilter.GaussianBlur(1.2))
    return {
        "target_poster": _from_pil(poster),
        "target_edges": _from_pil(edges),
        "target_smooth": _from_pil(smooth),
    }


def make_goldens(out_dir: Path) -> dict:
    # render from the quantized PNGs, not the float originals, so the
    # goldens match what a file-reading front end produces bit-for-bit
    blobs = imageio.read_image(out_dir / "bench_blobs.png")
    rings = imageio.read_image(out_dir / "bench_rings.png")
    cartoon = run_pipeline(get_pipeline("cartoon"), blobs,
                           mode="reference").output
    xdog = run_pipeline(get_pipeline("xdog"), rings,
                        mode="reference").output
    return {"golden_cartoon": cartoon, "golden_xdog": xdog}


def main() -> None:
    default_out = Path(__file__).resolve().parents[1] / "src/diffstyle/data"
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, default=default_out)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    bench = {name: fn() for name, fn in BENCH.items()}
    images = dict(bench)
    images.update(make_targets(bench))
    for name, chw in images.items():
        path = args.out_dir / f"{name}.png"
        imageio.write_image(path, chw)
        print(f"wrote {path}")
    for name, chw in make_goldens(args.out_dir).items():
        path = args.out_dir / f"{name}.png"
        imageio.write_image(path, chw)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
