"""HTTP surface over the triage service.

Thin translation layer: parse the request, call the service, serialize
the record. All decisions (triage, queue order, state transitions) stay
in the service so every client sees identical behavior.
"""

from __future__ import annotations

import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..errors import (
    DatasetError,
    FrameError,
    IllegalTransitionError,
    NoProductionModelError,
    PipelineBusyError,
    PromotionError,
    ServiceError,
    UnknownInspectionError,
    UnknownModelVersionError,
)
from .core import TriageService

__all__ = ["create_app"]

# Most specific classes first; the handler lookup walks the MRO, so the
# base-class rows only catch what the rows above them did not.
ERROR_STATUS: tuple[tuple[type[Exception], int], ...] = (
    (UnknownInspectionError, 404),
    (UnknownModelVersionError, 404),
    (IllegalTransitionError, 409),
    (PromotionError, 409),
    (PipelineBusyError, 409),
    (NoProductionModelError, 503),
    (FrameError, 422),
    (DatasetError, 422),
    (ServiceError, 409),
    (ValueError, 422),
)


class LabelBody(BaseModel):
    raw_label: str
    operator: str


class PromoteBody(BaseModel):
    approver: str


class RegisterBody(BaseModel):
    checkpoint_path: str
    manifest_hash: str = ""
    metrics: dict[str, float] = {}


class PipelineBody(BaseModel):
    trigger: str = "manual"
    wait: bool = True


def create_app(service: TriageService) -> FastAPI:
    app = FastAPI(title="sewergrade triage service")
    app.state.service = service

    def _handler(status: int):
        def handle(request: Request, exc: Exception) -> JSONResponse:
            return JSONResponse({"detail": str(exc)}, status_code=status)

        return handle

    for exc_type, status in ERROR_STATUS:
        app.add_exception_handler(exc_type, _handler(status))

    @app.post("/inspections", status_code=201)
    async def submit_inspection(request: Request) -> dict:
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/"):
            form = await request.form()
            uploads = form.getlist("frames")
            if not uploads:
                raise HTTPException(422, "no frame files in the upload")
            raw_id = form.get("inspection_id")
            inspection_id = str(raw_id) if raw_id else None
            inbox = (
                service.state_dir
                / "inbox"
                / (inspection_id or f"upload_{uuid.uuid4().hex[:12]}")
            )
            inbox.mkdir(parents=True, exist_ok=True)
            for upload in uploads:
                # Flatten any client-side paths; frames sort by name.
                name = Path(upload.filename or "frame.png").name
                (inbox / name).write_bytes(await upload.read())
            frames_dir = inbox
        else:
            doc = await request.json()
            frames_dir = doc.get("frames_dir")
            inspection_id = doc.get("inspection_id")
            if not frames_dir:
                raise HTTPException(422, "frames_dir is required")
        record = service.submit_inspection(frames_dir, inspection_id)
        return record.to_dict()

    @app.get("/inspections/{inspection_id}")
    def get_inspection(inspection_id: str) -> dict:
        return service.get_inspection(inspection_id).to_dict()

    @app.get("/queue")
    def queue(
        status: str | None = None,
        page: int = Query(0, ge=0),
        page_size: int = Query(20, ge=1, le=200),
    ) -> dict:
        listing = service.queue_listing(status=status, page=page, page_size=page_size)
        return {
            "items": [record.to_dict() for record in listing.items],
            "total": listing.total,
            "page": listing.page,
            "page_size": listing.page_size,
        }

    @app.post("/inspections/{inspection_id}/label")
    def submit_label(inspection_id: str, body: LabelBody) -> dict:
        record = service.submit_label(inspection_id, body.raw_label, body.operator)
        return record.to_dict()

    @app.get("/inspections/{inspection_id}/explanation")
    def explanation(
        inspection_id: str,
        target_class: int | None = Query(None, alias="class", ge=0, le=3),
        rule: str = "lrp_zero",
    ) -> dict:
        if target_class is None:
            record = service.get_inspection(inspection_id)
            if record.prediction is None:
                raise HTTPException(
                    409, f"inspection {inspection_id} has no prediction to explain"
                )
            target_class = record.prediction.class_index
        return service.explain_inspection(inspection_id, target_class, rule=rule)

    @app.get("/inspections/{inspection_id}/frames/{index}")
    def frame_image(inspection_id: str, index: int) -> dict:
        return service.frame_image(inspection_id, index)

    @app.get("/models")
    def list_models() -> list[dict]:
        return [entry.to_dict() for entry in service.list_models()]

    @app.get("/models/production")
    def production_model() -> dict:
        return service.production_model().to_dict()

    @app.post("/models/register", status_code=201)
    def register_model(body: RegisterBody) -> dict:
        entry = service.register_model(
            body.checkpoint_path, body.manifest_hash, body.metrics
        )
        return entry.to_dict()

    @app.post("/models/{version}/promote")
    def promote(version: int, body: PromoteBody) -> dict:
        return service.promote_model(version, body.approver).to_dict()

    @app.post("/pipeline/run")
    def run_pipeline(body: PipelineBody | None = None) -> dict:
        body = body or PipelineBody()
        run = service.run_pipeline(trigger=body.trigger, wait=body.wait)
        return run.to_dict()

    @app.get("/pipeline/runs")
    def list_runs() -> list[dict]:
        return [run.to_dict() for run in service.list_runs()]

    @app.get("/pipeline/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        try:
            return service.get_run(run_id).to_dict()
        except KeyError:
            raise HTTPException(404, f"no pipeline run {run_id!r}") from None

    return app
