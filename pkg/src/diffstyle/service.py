"""HTTP editing service: stateful sessions over the stylization engine.

A session pins an uploaded image to a pipeline and carries a committed
parameter set with a monotonically increasing revision number. Renders
always read the latest committed revision and use the exact reference
semantics, so a render here is byte-identical to the command-line render
of the same parameters. Optimizations run on a background thread against
a snapshot and commit their result as a new revision when they finish.

All endpoints live under /v1. PNG uploads are accepted as multipart form
files or base64 fields; masks travel as 16-bit PNGs.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import threading
import uuid

import numpy as np
from fastapi import APIRouter, FastAPI, HTTPException, Request
from fastapi.responses import Response
from PIL import Image

from . import __version__, imageio
from .optimize import NumericalFailure, OptimizeConfig, optimize, promote_to_mask
from .params import ParamSet, mask_shape
from .pipelines import get_pipeline, run_pipeline

PREVIEW_MAX_SIDE = 512
PROGRESS_EVERY = 10


class _Session:
    def __init__(self, sid: str, spec, image: np.ndarray):
        self.id = sid
        self.spec = spec
        self.image = image
        self.pset = spec.default_params()
        self.revision = 0
        self.lock = threading.Lock()
        self.job_id: str | None = None


def _decode_image(data: bytes) -> np.ndarray:
    try:
        img = imageio.read_image(io.BytesIO(data))
    except Exception:
        raise HTTPException(400, "cannot decode image upload as PNG")
    if not np.isfinite(img).all() or img.min() < 0 or img.max() > 1:
        raise HTTPException(400, "decoded image is out of range")
    return img


def _decode_mask(b64: str) -> np.ndarray:
    try:
        data = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(400, "mask_b64 is not valid base64")
    try:
        return imageio.read_mask(io.BytesIO(data))
    except Exception:
        raise HTTPException(400, "cannot decode mask upload as 16-bit PNG")


def _encode_png(chw: np.ndarray) -> bytes:
    buf = io.BytesIO()
    imageio.write_image(buf, chw)
    return buf.getvalue()


def _params_payload(pset: ParamSet) -> dict:
    """Wire form of a parameter set: normalized scalars, masks as base64
    16-bit PNGs."""
    out: dict = {}
    for name in pset.specs:
        v = pset.values[name]
        if v.ndim:
            buf = io.BytesIO()
            imageio.write_mask(buf, v)
            out[name] = {
                "mask_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
                "shape": [int(v.shape[1]), int(v.shape[2])],
            }
        else:
            out[name] = float(v)
    return out


def _registry_payload(spec, image_hw) -> list:
    hm, wm = mask_shape(*image_hw)
    return [
        {
            "name": ps.name,
            "lo": ps.lo,
            "hi": ps.hi,
            "default": ps.default,
            "default_normalized": ps.default_normalized,
            "maskable": ps.maskable,
            "differentiable": ps.differentiable,
            "mask_shape": [hm, wm] if ps.maskable else None,
        }
        for ps in spec.specs.values()
    ]


async def _image_from_request(request: Request, file_field: str,
                              b64_field: str) -> tuple:
    """Pull (png bytes, other fields) from a multipart or JSON request."""
    ctype = request.headers.get("content-type", "")
    if ctype.startswith("multipart/"):
        form = await request.form()
        fields = {k: v for k, v in form.items() if k != file_field}
        up = form.get(file_field)
        if up is None or isinstance(up, str):
            raise HTTPException(400, f"missing file field {file_field!r}")
        return await up.read(), fields
    try:
        body = await request.json()
    except Exception:
        raise HTTPException(400, "body must be JSON or multipart form data")
    if not isinstance(body, dict) or b64_field not in body:
        raise HTTPException(400, f"missing field {b64_field!r}")
    try:
        data = base64.b64decode(body[b64_field], validate=True)
    except (binascii.Error, ValueError, TypeError):
        raise HTTPException(400, f"{b64_field} is not valid base64")
    fields = {k: v for k, v in body.items() if k != b64_field}
    return data, fields


def _preview_image(image: np.ndarray, max_side: int) -> np.ndarray:
    """Bilinear downscale to max_side on the long edge (never upscale)."""
    c, h, w = image.shape
    side = max(h, w)
    if side <= max_side:
        return image
    scale = max_side / side
    h2, w2 = max(2, round(h * scale)), max(2, round(w * scale))
    planes = [
        np.asarray(
            Image.fromarray(image[i].astype(np.float32), mode="F")
            .resize((w2, h2), Image.BILINEAR))
        for i in range(c)
    ]
    return np.clip(np.stack(planes), 0.0, 1.0)


def create_app() -> FastAPI:
    app = FastAPI(title="diffstyle service", version=__version__)
    router = APIRouter(prefix="/v1")
    sessions: dict = {}
    jobs: dict = {}

    def _session(sid: str) -> _Session:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(404, f"unknown session {sid!r}")
        return sess

    @router.post("/sessions")
    async def create_session(request: Request):
        data, fields = await _image_from_request(request, "image", "image_b64")
        pipeline_id = str(fields.get("pipeline", "cartoon"))
        try:
            spec = get_pipeline(pipeline_id)
        except ValueError as e:
            raise HTTPException(400, str(e))
        image = _decode_image(data)
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = _Session(sid, spec, image)
        h, w = image.shape[1:]
        return {
            "session_id": sid,
            "pipeline": spec.pipeline_id,
            "revision": 0,
            "image_size": [h, w],
            "registry": _registry_payload(spec, (h, w)),
        }

    @router.get("/sessions/{sid}/params")
    def get_params(sid: str):
        sess = _session(sid)
        with sess.lock:
            return {"revision": sess.revision,
                    "params": _params_payload(sess.pset)}

    @router.put("/sessions/{sid}/params")
    async def put_params(sid: str, request: Request):
        sess = _session(sid)
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(400, "body must be JSON")
        updates = body.get("params") if isinstance(body, dict) else None
        if not isinstance(updates, dict) or not updates:
            raise HTTPException(400, "body must be {\"params\": {...}}")
        with sess.lock:
            pset = sess.pset.copy()
            for name, val in updates.items():
                if name not in pset.specs:
                    raise HTTPException(400, f"unknown parameter {name!r}")
                try:
                    if isinstance(val, bool):
                        raise HTTPException(400,
                                            f"{name}: boolean is not a value")
                    elif isinstance(val, (int, float)):
                        pset.set_scalar(name, normalized=float(val))
                    elif isinstance(val, dict) and "mask_b64" in val:
                        pset.set_mask(name, _decode_mask(val["mask_b64"]))
                    elif isinstance(val, dict) and "mask" in val:
                        arr = np.asarray(val["mask"], dtype=np.float32)
                        pset.set_mask(name, arr[None] if arr.ndim == 2 else arr)
                    elif val is None:
                        pset.set_scalar(
                            name,
                            normalized=pset.specs[name].default_normalized)
                    else:
                        raise HTTPException(
                            400, f"{name}: expected a number, a mask object, "
                                 "or null")
                except ValueError as e:
                    raise HTTPException(400, f"{name}: {e}")
            sess.pset = pset
            sess.revision += 1
            return {"revision": sess.revision}

    @router.post("/sessions/{sid}/render")
    async def render(sid: str, request: Request):
        sess = _session(sid)
        body = {}
        if (await request.body()):
            try:
                body = await request.json()
            except Exception:
                raise HTTPException(400, "body must be JSON")
            if not isinstance(body, dict):
                raise HTTPException(400, "body must be a JSON object")
        full = bool(body.get("full", False))
        max_side = body.get("max_side", PREVIEW_MAX_SIDE)
        if not isinstance(max_side, int) or max_side < 16:
            raise HTTPException(400, "max_side must be an integer >= 16")
        with sess.lock:
            pset = sess.pset.copy()
            revision = sess.revision
        image = sess.image if full else _preview_image(sess.image, max_side)
        out = run_pipeline(sess.spec, image, pset, "reference").output
        return Response(content=_encode_png(out), media_type="image/png",
                        headers={"X-Revision": str(revision)})

    @router.post("/sessions/{sid}/optimize")
    async def start_optimize(sid: str, request: Request):
        sess = _session(sid)
        data, fields = await _image_from_request(request, "target",
                                                 "target_b64")
        target = _decode_image(data)
        if target.shape[1:] != sess.image.shape[1:]:
            raise HTTPException(
                400, f"target size {target.shape[1:]} does not match "
                     f"image size {sess.image.shape[1:]}")
        raw_cfg = fields.get("config", {})
        if isinstance(raw_cfg, str):
            try:
                raw_cfg = json.loads(raw_cfg)
            except json.JSONDecodeError:
                raise HTTPException(400, "config is not valid JSON")
        if not isinstance(raw_cfg, dict):
            raise HTTPException(400, "config must be a JSON object")
        raw_cfg = dict(raw_cfg)
        mask_names = raw_cfg.pop("masks", [])
        if not isinstance(mask_names, list):
            raise HTTPException(400, "masks must be a list of parameter names")
        for name in mask_names:
            if name not in sess.spec.specs:
                raise HTTPException(400, f"masks: unknown parameter {name!r}")
            if not sess.spec.specs[name].maskable:
                raise HTTPException(400, f"masks: {name!r} cannot be a mask")
        allowed = {"iterations", "lr", "loss", "tv_weight", "budget",
                   "free_params", "seed"}
        unknown = set(raw_cfg) - allowed
        if unknown:
            raise HTTPException(400, f"unknown config keys: {sorted(unknown)}")
        try:
            ocfg = OptimizeConfig(**{
                k: (tuple(v) if k == "free_params" and v is not None else v)
                for k, v in raw_cfg.items()})
        except TypeError as e:
            raise HTTPException(400, str(e))
        if ocfg.loss not in ("l1", "l2"):
            raise HTTPException(400, f"loss must be l1 or l2, got {ocfg.loss!r}")

        # claim the session's single job slot and register the job while
        # still holding the lock, so a concurrent POST cannot slip past 409
        with sess.lock:
            existing = jobs.get(sess.job_id) if sess.job_id else None
            if existing is not None and existing["state"] == "running":
                raise HTTPException(
                    409, "an optimization is already running for this session")
            pset0 = sess.pset.copy()
            job_id = uuid.uuid4().hex[:12]
            sess.job_id = job_id
            job = {
                "job_id": job_id,
                "session_id": sid,
                "state": "running",
                "iteration": 0,
                "iterations_total": ocfg.iterations,
                "loss": None,
                "history": [],
                "error": None,
                "result": None,
            }
            jobs[job_id] = job
        for name in mask_names:
            promote_to_mask(pset0, name, sess.image.shape[1:])

        def on_step(i, lv, _pset):
            if i % PROGRESS_EVERY == 0 or i == ocfg.iterations - 1:
                job["iteration"] = i
                job["loss"] = lv
                job["history"].append([i, lv])

        def work():
            try:
                best, report = optimize(sess.spec, sess.image, target,
                                        pset0, ocfg, callback=on_step)
            except NumericalFailure as e:
                job["error"] = str(e)
                job["state"] = "failed"
                return
            except Exception as e:  # defensive: surface, don't hang the job
                job["error"] = f"{type(e).__name__}: {e}"
                job["state"] = "failed"
                return
            with sess.lock:
                sess.pset = best
                sess.revision += 1
                revision = sess.revision
            job["result"] = {
                "params": _params_payload(best),
                "revision": revision,
                "best_loss": report.best_loss,
                "best_iteration": report.best_iteration,
                "seconds": report.seconds,
            }
            job["state"] = "done"

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id}

    @router.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return job

    app.include_router(router)
    return app


app = create_app()
