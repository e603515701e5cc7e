"""Command-line front end: render, optimize, benchmark, gradcheck, serve.

Exit codes are a stable contract:
  0 success
  2 input error (missing or undecodable files, mismatched images)
  3 numerical failure (divergent optimization, failed gradient checks)
  4 config error (bad JSON, unknown parameters, invalid values)

Every command accepts --config pointing at a JSON object whose keys are
the command's flag names; explicitly passed flags win over config values.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import datasets, imageio
from .optimize import (
    NumericalFailure,
    OptimizeConfig,
    functional_benchmark,
    optimize,
    promote_to_mask,
)
from .params import ParamSet
from .pipelines import DEFAULT_BUDGET, get_pipeline, run_pipeline


class InputError(click.ClickException):
    exit_code = 2


class NumericalError(click.ClickException):
    exit_code = 3


class ConfigError(click.ClickException):
    exit_code = 4


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return data


def _merge_config(ctx: click.Context, config: dict, entries) -> dict:
    """Overlay config values under explicitly passed flags (flag wins).

    entries: (config key, click parameter name, flag value) triples.
    """
    known = {key for key, _, _ in entries}
    unknown = set(config) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, pname, val in entries:
        from_flag = ctx.get_parameter_source(pname) == ParameterSource.COMMANDLINE
        out[key] = val if (from_flag or key not in config) else config[key]
    return out


def _as_int(val, name: str) -> int:
    try:
        return int(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {val!r}")


def _as_float(val, name: str) -> float:
    try:
        return float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {val!r}")


def _get_pipeline(pipeline_id) -> "PipelineSpec":
    try:
        return get_pipeline(str(pipeline_id))
    except ValueError as e:
        raise ConfigError(str(e))


def _read_image(path, what: str = "image") -> np.ndarray:
    if path is None:
        raise ConfigError(f"no {what} file given")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {p}")
    try:
        img = imageio.read_image(p)
    except Exception as e:
        raise InputError(f"cannot decode {what} file {p}: {e}")
    if not np.isfinite(img).all():
        raise InputError(f"{what} file {p} contains non-finite values")
    return img


def _load_params(spec, path) -> ParamSet:
    if path is None:
        return spec.default_params()
    p = Path(path)
    if not p.is_file():
        raise InputError(f"parameter file not found: {p}")
    try:
        return ParamSet.load(spec.specs, p)
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise ConfigError(f"bad parameter file {p}: {e}")


def _apply_set(pset: ParamSet, assignments) -> None:
    """Apply --set name=value overrides (physical values)."""
    for item in assignments:
        name, sep, raw = str(item).partition("=")
        if not sep:
            raise ConfigError(f"--set needs name=value, got {item!r}")
        try:
            pset.set_scalar(name.strip(), physical=float(raw))
        except KeyError as e:
            raise ConfigError(str(e.args[0]))
        except ValueError:
            raise ConfigError(f"--set {name}: bad value {raw!r}")


@click.group()
@click.version_option(package_name="diffstyle")
def main() -> None:
    """Differentiable image stylization: render, fit, benchmark, serve."""


@main.command("render")
@click.option("--pipeline", default="cartoon", show_default=True,
              help="Pipeline id: xdog or cartoon.")
@click.option("--input", "input_path", default=None, help="Input PNG.")
@click.option("--out", "out_path", default=None, help="Output PNG.")
@click.option("--params", "params_path", default=None,
              help="Parameter JSON (masks load from sibling PNGs).")
@click.option("--set", "assignments", multiple=True,
              help="Override one scalar, e.g. --set bins=4 (physical units).")
@click.option("--soft", is_flag=True,
              help="Render the differentiable approximation instead of the "
                   "exact reference semantics.")
@click.option("--kernel-budget", default=DEFAULT_BUDGET, show_default=True,
              help="Line-sample cap per side for soft renders.")
@click.option("--config", "config_path", default=None,
              help="JSON file with defaults for these flags.")
@click.pass_context
def cmd_render(ctx, pipeline, input_path, out_path, params_path, assignments,
               soft, kernel_budget, config_path) -> None:
    """Stylize one image and write the PNG plus the parameter JSON used."""
    cfg = _merge_config(ctx, _load_config(config_path), [
        ("pipeline", "pipeline", pipeline),
        ("input", "input_path", input_path),
        ("out", "out_path", out_path),
        ("params", "params_path", params_path),
        ("set", "assignments", list(assignments)),
        ("soft", "soft", soft),
        ("kernel_budget", "kernel_budget", kernel_budget),
    ])
    spec = _get_pipeline(cfg["pipeline"])
    image = _read_image(cfg["input"], "input")
    if cfg["out"] is None:
        raise ConfigError("no --out path given")
    pset = _load_params(spec, cfg["params"])
    _apply_set(pset, cfg["set"])

    mode = "differentiable" if cfg["soft"] else "reference"
    budget = _as_int(cfg["kernel_budget"], "--kernel-budget")
    try:
        res = run_pipeline(spec, image, pset, mode, budget=budget)
    except ValueError as e:
        raise InputError(str(e))
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    imageio.write_image(out, res.output)
    pset.save(out.with_suffix(".params.json"))
    click.echo(f"wrote {out}")


@main.command("optimize")
@click.option("--pipeline", default="cartoon", show_default=True)
@click.option("--input", "input_path", default=None, help="Input PNG.")
@click.option("--target", "target_path", default=None,
              help="Target PNG to match.")
@click.option("--out", "out_dir", default=None,
              help="Output directory for params/masks/render/report.")
@click.option("--params", "params_path", default=None,
              help="Initial parameter JSON (default: registry defaults).")
@click.option("--iterations", default=1000, show_default=True)
@click.option("--lr", default=0.1, show_default=True)
@click.option("--loss", default="l2", show_default=True,
              type=click.Choice(["l1", "l2"]))
@click.option("--tv", default=0.0, show_default=True,
              help="Total-variation weight on free masks.")
@click.option("--kernel-budget", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--free", "free_names", multiple=True,
              help="Restrict fitting to these parameters (repeatable).")
@click.option("--mask", "mask_names", multiple=True,
              help="Promote these parameters to paintable masks first.")
@click.option("--config", "config_path", default=None)
@click.pass_context
def cmd_optimize(ctx, pipeline, input_path, target_path, out_dir, params_path,
                 iterations, lr, loss, tv, kernel_budget, seed, free_names,
                 mask_names, config_path) -> None:
    """Fit parameters so the stylized input matches the target image."""
    cfg = _merge_config(ctx, _load_config(config_path), [
        ("pipeline", "pipeline", pipeline),
        ("input", "input_path", input_path),
        ("target", "target_path", target_path),
        ("out", "out_dir", out_dir),
        ("params", "params_path", params_path),
        ("iterations", "iterations", iterations),
        ("lr", "lr", lr),
        ("loss", "loss", loss),
        ("tv", "tv", tv),
        ("kernel_budget", "kernel_budget", kernel_budget),
        ("seed", "seed", seed),
        ("free", "free_names", list(free_names)),
        ("mask", "mask_names", list(mask_names)),
    ])
    spec = _get_pipeline(cfg["pipeline"])
    image = _read_image(cfg["input"], "input")
    target = _read_image(cfg["target"], "target")
    if image.shape[1:] != target.shape[1:]:
        raise InputError(
            f"input {image.shape[1:]} and target {target.shape[1:]} "
            "sizes differ")
    if cfg["out"] is None:
        raise ConfigError("no --out directory given")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    pset = _load_params(spec, cfg["params"])
    for name in cfg["mask"]:
        if name not in spec.specs:
            raise ConfigError(f"--mask: unknown parameter {name!r}")
        if not spec.specs[name].maskable:
            raise ConfigError(f"--mask: parameter {name!r} cannot be a mask")
        promote_to_mask(pset, name, image.shape[1:])
    free = tuple(cfg["free"]) or None
    ocfg = OptimizeConfig(
        iterations=_as_int(cfg["iterations"], "--iterations"),
        lr=_as_float(cfg["lr"], "--lr"),
        loss=str(cfg["loss"]),
        tv_weight=_as_float(cfg["tv"], "--tv"),
        budget=_as_int(cfg["kernel_budget"], "--kernel-budget"),
        free_params=free,
        seed=_as_int(cfg["seed"], "--seed"),
    )
    if ocfg.loss not in ("l1", "l2"):
        raise ConfigError(f"--loss must be l1 or l2, got {ocfg.loss!r}")

    history: list = []
    report_path = out / "report.json"

    def on_step(i, lv, _pset):
        history.append(lv)

    try:
        best, report = optimize(spec, image, target, pset, ocfg,
                                callback=on_step)
    except NumericalFailure as e:
        report_path.write_text(json.dumps({
            "status": "numerical_failure", "error": str(e),
            "loss_history": history,
        }, indent=2))
        raise NumericalError(f"{e} (partial report in {report_path})")
    except ValueError as e:
        raise ConfigError(str(e))

    best.save(out / "params.json")
    imageio.write_image(out / "output.png", report.best_output)
    payload = {
        "status": "ok",
        "pipeline": spec.pipeline_id,
        "iterations": ocfg.iterations,
        "loss": ocfg.loss,
        "best_loss": report.best_loss,
        "best_iteration": report.best_iteration,
        "final_loss": history[-1] if history else None,
        "seconds": report.seconds,
        "loss_history": history,
        "metrics": report.metrics,
    }
    report_path.write_text(json.dumps(payload, indent=2))
    click.echo(f"best loss {report.best_loss:.6g} at iteration "
               f"{report.best_iteration}; artifacts in {out}")


@main.command("benchmark")
@click.option("--pipeline", default="cartoon", show_default=True)
@click.option("--out", "out_path", default=None,
              help="Report path (.csv or .json).")
@click.option("--iterations", default=1000, show_default=True)
@click.option("--seed", "seeds", multiple=True, type=int,
              help="Target seeds (repeatable; default 0 and 1).")
@click.option("--kernel-budget", default=8, show_default=True)
@click.option("--jobs", default=1, show_default=True,
              help="Worker processes for the corpus.")
@click.option("--config", "config_path", default=None)
@click.pass_context
def cmd_benchmark(ctx, pipeline, out_path, iterations, seeds, kernel_budget,
                  jobs, config_path) -> None:
    """Round-trip fit quality over the bundled benchmark corpus."""
    cfg = _merge_config(ctx, _load_config(config_path), [
        ("pipeline", "pipeline", pipeline),
        ("out", "out_path", out_path),
        ("iterations", "iterations", iterations),
        ("seed", "seeds", list(seeds)),
        ("kernel_budget", "kernel_budget", kernel_budget),
        ("jobs", "jobs", jobs),
    ])
    spec = _get_pipeline(cfg["pipeline"])
    seeds = tuple(_as_int(s, "--seed") for s in cfg["seed"]) or (0, 1)
    ocfg = OptimizeConfig(
        iterations=_as_int(cfg["iterations"], "--iterations"),
        budget=_as_int(cfg["kernel_budget"], "--kernel-budget"))
    result = functional_benchmark(spec, datasets.benchmark_images(),
                                  seeds=seeds, cfg=ocfg,
                                  jobs=_as_int(cfg["jobs"], "--jobs"))
    rows, agg = result["rows"], result["aggregate"]
    if cfg["out"] is not None:
        dest = Path(cfg["out"])
        dest.parent.mkdir(parents=True, exist_ok=True)
        if dest.suffix.lower() == ".json":
            dest.write_text(json.dumps(result, indent=2))
        else:
            with dest.open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                writer.writeheader()
                writer.writerows(rows)
        click.echo(f"wrote {dest}")
    for row in rows:
        click.echo(f"{row['image']} seed={row['seed']} "
                   f"ssim={row['ssim']:.4f} psnr={row['psnr']:.2f}")
    click.echo(f"mean ssim {agg['mean_ssim']:.4f}  "
               f"mean psnr {agg['mean_psnr']:.2f}  "
               f"total {agg['total_seconds']:.1f}s")


@main.command("gradcheck")
@click.option("--trials", default=20, show_default=True,
              help="Random finite-difference trials per op.")
@click.option("--seed", default=0, show_default=True)
@click.option("--op", "ops", multiple=True,
              help="Check only these ops (repeatable).")
@click.option("--config", "config_path", default=None)
@click.pass_context
def cmd_gradcheck(ctx, trials, seed, ops, config_path) -> None:
    """Finite-difference check of every registered op; one line per op."""
    from .grad.suite import EXPECT_FAIL, run_suite, suite_ok

    cfg = _merge_config(ctx, _load_config(config_path), [
        ("trials", "trials", trials),
        ("seed", "seed", seed),
        ("op", "ops", list(ops)),
    ])
    names = list(cfg["op"]) or None
    try:
        reports = run_suite(names, trials=_as_int(cfg["trials"], "--trials"),
                            seed=_as_int(cfg["seed"], "--seed"))
    except ValueError as e:
        raise ConfigError(str(e))
    for r in reports:
        suffix = "  (must fail)" if r.name in EXPECT_FAIL else ""
        click.echo(r.line() + suffix)
    if not suite_ok(reports):
        raise NumericalError("gradient checks failed")
    click.echo(f"all {len(reports)} checks behaved as expected")


@main.command("serve")
@click.option("--serve-port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--config", "config_path", default=None)
@click.pass_context
def cmd_serve(ctx, serve_port, host, config_path) -> None:
    """Run the HTTP editing service."""
    cfg = _merge_config(ctx, _load_config(config_path), [
        ("serve_port", "serve_port", serve_port),
        ("host", "host", host),
    ])
    try:
        import uvicorn
    except ImportError:
        raise ConfigError("uvicorn is not installed; "
                          "install the [serve] extra")
    from .service import app
    uvicorn.run(app, host=str(cfg["host"]),
                port=_as_int(cfg["serve_port"], "--serve-port"))


if __name__ == "__main__":
    main()
