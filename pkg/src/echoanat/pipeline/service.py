"""HTTP API for the segmentation workbench.

Endpoints (JSON unless noted):

- ``GET  /api/images``                          list browsable cases
- ``GET  /api/images/{id}?view=us|translated``  PNG bytes
- ``POST /api/segment``                         start an async contour job
- ``GET  /api/jobs/{id}``                       poll status / progress / result
- ``POST /api/masks``                           store a mask (RLE), get an id
- ``GET  /api/masks/{id}``                      stored mask as PNG bytes
- ``GET  /api/metrics?mask_a=&mask_b=``         scores for two stored masks

Segmentation jobs run on a bounded worker pool; job state transitions are
forward-only (queued -> running -> done|failed). Errors use
``{"code": ..., "message": ...}`` bodies.
"""
from __future__ import annotations

import io
import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .. import datasets, metrics
from ..cyclegan import load_checkpoint, translate
from ..errors import EchoAnatError, ParameterError
from ..grids import ImageGrid, LevelSet, load_image_png, load_mask_png, save_image_png, save_mask_png
from ..segmentation import CircleSeed, GACParams, MaskSeed, morphgac_run
from .config import RunConfig
from .rle import decode_mask, encode_mask

JOB_STATUS_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}


class CircleInit(BaseModel):
    type: Literal["circle"] = "circle"
    center: tuple[float, float]  # (row, col) in image pixels
    radius: float


class MaskInit(BaseModel):
    type: Literal["mask"] = "mask"
    mask: dict  # RLE payload


class ParamsModel(BaseModel):
    alpha: Optional[float] = None
    sigma: Optional[float] = None
    iterations: Optional[int] = None
    balloon: Optional[float] = None
    threshold: Optional[float] = None
    smoothing: Optional[int] = None
    early_stop_window: Optional[int] = None


class SegmentRequest(BaseModel):
    image_id: str
    view: Literal["us", "translated"] = "us"
    init: Union[CircleInit, MaskInit] = Field(discriminator="type")
    params: Optional[ParamsModel] = None
    trace_every: int = 0


class MaskUpload(BaseModel):
    mask: dict
    image_id: Optional[str] = None


@dataclass
class JobRecord:
    id: str
    kind: str
    status: str = "queued"
    progress: float = 0.0
    result: Optional[dict] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "status": self.status,
            "progress": self.progress,
            "result": self.result,
            "error": self.error,
        }


class JobManager:
    """Bounded worker queue with forward-only job state transitions."""

    def __init__(self, workers: int = 2):
        self.executor = ThreadPoolExecutor(max_workers=workers)
        self.jobs: dict[str, JobRecord] = {}
        self.lock = threading.Lock()
        self._counter = itertools.count(1)

    def submit(self, kind: str, fn) -> JobRecord:
        with self.lock:
            job = JobRecord(id=f"job-{next(self._counter)}", kind=kind)
            self.jobs[job.id] = job

        def run():
            self.advance(job, "running")
            try:
                result = fn(job)
            except Exception as exc:  # surfaced to the client, job must not hang
                with self.lock:
                    job.error = str(exc)
                self.advance(job, "failed")
                return
            with self.lock:
                job.result = result
                job.progress = 1.0
            self.advance(job, "done")

        self.executor.submit(run)
        return job

    def advance(self, job: JobRecord, status: str) -> None:
        with self.lock:
            if JOB_STATUS_ORDER[status] < JOB_STATUS_ORDER[job.status]:
                raise EchoAnatError(
                    f"job {job.id} cannot move {job.status} -> {status} (forward-only)"
                )
            job.status = status

    def get(self, job_id: str) -> JobRecord | None:
        with self.lock:
            return self.jobs.get(job_id)


@dataclass
class ImageStore:
    """Cases from a BUSI tree plus cached translated views and stored masks."""

    root: Path
    checkpoint: Optional[Path] = None
    cases: dict = field(default_factory=dict)
    translated: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)
    bundle: object = None
    mask_counter: itertools.count = field(default_factory=lambda: itertools.count(1))
    lock: threading.Lock = field(default_factory=threading.Lock)
    patch_size: int = 450
    stride: int = 225

    def __post_init__(self):
        self.root = Path(self.root)
        for case in datasets.discover_cases(self.root):
            self.cases[case["id"]] = case
        if self.checkpoint is not None:
            state = load_checkpoint(self.checkpoint)
            state.bundle.eval()
            self.bundle = state.bundle

    def image(self, image_id: str, view: str) -> ImageGrid:
        case = self.cases.get(image_id)
        if case is None:
            raise HTTPException(404, detail={"code": "unknown_image", "message": f"no image {image_id!r}"})
        grid = load_image_png(case["image_path"])
        if view == "us":
            return grid
        if self.bundle is None:
            raise HTTPException(
                404,
                detail={
                    "code": "translation_unavailable",
                    "message": "no checkpoint loaded; translated view unavailable",
                },
            )
        with self.lock:
            cached = self.translated.get(image_id)
        if cached is not None:
            return cached
        out = translate(self.bundle, grid, patch_size=self.patch_size, stride=self.stride)
        with self.lock:
            self.translated[image_id] = out
        return out

    def store_mask(self, mask: LevelSet) -> str:
        with self.lock:
            mask_id = f"m-{next(self.mask_counter)}"
            self.masks[mask_id] = mask
        return mask_id

    def mask(self, mask_id: str) -> LevelSet:
        with self.lock:
            mask = self.masks.get(mask_id)
        if mask is None:
            raise HTTPException(404, detail={"code": "unknown_mask", "message": f"no mask {mask_id!r}"})
        return mask


def _merge_params(base: GACParams, model: Optional[ParamsModel]) -> GACParams:
    if model is None:
        return base
    fields = {k: v for k, v in model.model_dump().items() if v is not None}
    merged = {
        "iterations": base.iterations,
        "smoothing": base.smoothing,
        "balloon": base.balloon,
        "threshold": base.threshold,
        "early_stop_window": base.early_stop_window,
        "alpha": base.alpha,
        "sigma": base.sigma,
    }
    merged.update(fields)
    try:
        return GACParams(**merged)
    except ParameterError as exc:
        raise HTTPException(422, detail={"code": "invalid_params", "message": str(exc)})


def create_app(
    root,
    checkpoint=None,
    config: RunConfig | None = None,
    workers: int = 2,
) -> FastAPI:
    config = config or RunConfig()
    store = ImageStore(
        root=root,
        checkpoint=Path(checkpoint) if checkpoint else None,
        patch_size=config.dataset.patch_size,
        stride=config.dataset.stride,
    )
    jobs = JobManager(workers=workers)
    seg = config.segmentation
    base_params = GACParams(
        iterations=seg.iterations,
        smoothing=seg.smoothing,
        balloon=seg.balloon,
        threshold=seg.threshold,
        early_stop_window=seg.early_stop_window,
        alpha=seg.alpha,
        sigma=seg.sigma,
    )
    app = FastAPI(title="echoanat workbench API")
    app.state.store = store
    app.state.jobs = jobs

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        detail = exc.detail
        if isinstance(detail, dict) and "code" in detail:
            body = detail
        else:
            body = {"code": "error", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=body)

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422, content={"code": "validation_error", "message": str(exc.errors())}
        )

    @app.get("/api/images")
    def list_images():
        out = []
        for case_id, case in sorted(store.cases.items()):
            grid = load_image_png(case["image_path"])
            views = ["us"] + (["translated"] if store.bundle is not None else [])
            out.append(
                {
                    "id": case_id,
                    "class": case["class_label"],
                    "height": grid.height,
                    "width": grid.width,
                    "views": views,
                    "has_reference_mask": bool(case["mask_paths"]),
                }
            )
        return out

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str, view: str = Query("us")):
        if view not in ("us", "translated"):
            raise HTTPException(
                422, detail={"code": "invalid_view", "message": f"view must be us or translated, got {view!r}"}
            )
        grid = store.image(image_id, view)
        buf = io.BytesIO()
        save_image_png(grid, buf)
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/api/images/{image_id}/reference_mask")
    def get_reference_mask(image_id: str):
        case = store.cases.get(image_id)
        if case is None:
            raise HTTPException(404, detail={"code": "unknown_image", "message": f"no image {image_id!r}"})
        if not case["mask_paths"]:
            raise HTTPException(
                404, detail={"code": "no_reference_mask", "message": f"{image_id} has no reference mask"}
            )
        merged = load_mask_png(case["mask_paths"][0])
        if len(case["mask_paths"]) > 1:
            from ..grids import merge_masks

            merged = merge_masks([load_mask_png(p) for p in case["mask_paths"]])
        return encode_mask(merged)

    @app.post("/api/segment")
    def segment(req: SegmentRequest):
        grid = store.image(req.image_id, req.view)
        params = _merge_params(base_params, req.params)
        h, w = grid.shape
        if isinstance(req.init, CircleInit):
            cy, cx = req.init.center
            r = req.init.radius
            if r <= 0:
                raise HTTPException(
                    422, detail={"code": "invalid_seed", "message": f"radius must be positive, got {r}"}
                )
            if cy - r < 0 or cx - r < 0 or cy + r > h - 1 or cx + r > w - 1:
                raise HTTPException(
                    422,
                    detail={
                        "code": "seed_out_of_bounds",
                        "message": (
                            f"seed circle (center ({cy}, {cx}), radius {r}) exceeds image "
                            f"bounds {h}x{w}; it must lie fully inside [0, {h - 1}] x [0, {w - 1}]"
                        ),
                    },
                )
            init = CircleSeed((cy, cx), r)
        else:
            try:
                mask = decode_mask(req.init.mask)
            except ParameterError as exc:
                raise HTTPException(422, detail={"code": "invalid_mask", "message": str(exc)})
            if mask.shape != (h, w):
                raise HTTPException(
                    422,
                    detail={
                        "code": "mask_shape_mismatch",
                        "message": f"seed mask is {mask.shape}, image is {(h, w)}",
                    },
                )
            init = MaskSeed(mask)
        trace_every = req.trace_every

        def run(job: JobRecord):
            def on_iteration(i, total):
                job.progress = min(i / total, 0.999)

            result = morphgac_run(grid, init, params, trace_every=trace_every, on_iteration=on_iteration)
            return {
                "mask": encode_mask(result.mask),
                "trace": [encode_mask(t) for t in result.trace],
                "iterations": result.iterations,
            }

        job = jobs.submit("segment", run)
        return {"job_id": job.id, "status": job.status}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, detail={"code": "unknown_job", "message": f"no job {job_id!r}"})
        return job.to_dict()

    @app.post("/api/masks")
    def post_mask(req: MaskUpload):
        try:
            mask = decode_mask(req.mask)
        except ParameterError as exc:
            raise HTTPException(422, detail={"code": "invalid_mask", "message": str(exc)})
        mask_id = store.store_mask(mask)
        return {"mask_id": mask_id}

    @app.get("/api/masks/{mask_id}")
    def get_mask(mask_id: str):
        mask = store.mask(mask_id)
        buf = io.BytesIO()
        save_mask_png(mask, buf)
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/api/metrics")
    def get_metrics(mask_a: str = Query(...), mask_b: str = Query(...)):
        a, b = store.mask(mask_a), store.mask(mask_b)
        if a.shape != b.shape:
            raise HTTPException(
                422,
                detail={
                    "code": "mask_shape_mismatch",
                    "message": f"mask shapes differ: {a.shape} vs {b.shape}",
                },
            )
        lm = metrics.compute_lesion_metrics(a, b, a.shape, "manual")
        return {
            "dice": lm.dice,
            "center_error_pct": lm.center_error_pct,
            "area_index_pct": lm.area_index_pct,
            "degenerate": lm.degenerate,
        }

    return app


def serve(root, checkpoint=None, config: RunConfig | None = None,
          host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    app = create_app(root, checkpoint=checkpoint, config=config)
    uvicorn.run(app, host=host, port=port)
