"""HTTP/JSON facade over the pipeline: upload, search, review, validate.

Single-process service; the store is flushed to disk after every mutating
request, and mutations are serialized behind one lock. Error bodies are
always ``{"code": ..., "message": ...}`` with the domain error code; no
stack traces or paths leak to clients.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, File, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import RedirectResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import wire
from .errors import HannotError, UnknownImageError
from .image import describe_bytes, sniff_media_type
from .retrieval import (
    DistanceVariant,
    RetrievalConfig,
    propagate_annotation,
    query_similar,
    vote_keywords,
)
from .store import CorpusFilter, ImageEntry, Store, content_hash, load_corpus, save_corpus

__all__ = ["create_app", "STATUS_BY_CODE"]

STATUS_BY_CODE = {
    "FORMAT_ERROR": 400,
    "IO_ERROR": 400,
    "NO_FEATURES": 422,
    "DEGENERATE_IMAGE": 422,
    "INVALID_RECORD": 422,
    "INVALID_REQUEST": 422,
    "INSUFFICIENT_DATA": 422,
    "EMPTY_SET": 422,
    "OUT_OF_BOUNDS": 422,
    "UNKNOWN_IMAGE": 404,
    "EMPTY_CORPUS": 404,
    "FINGERPRINT_MISMATCH": 409,
    "ID_CONFLICT": 409,
    "SCHEMA_ERROR": 500,
    "INTERNAL": 500,
}


class BadRequest(HannotError):
    code = "INVALID_REQUEST"


class QueryBody(BaseModel):
    image_id: str
    specialty: str
    class_name: str | None = None
    sub_class: str | None = None
    variant: str | None = None
    top_k: int | None = None
    threshold: float | None = None


class AnnotateBody(BaseModel):
    image_id: str
    selected_image_id: str
    physician_id: str
    keywords: list[str] | None = None


def _json(payload, status_code: int = 200) -> Response:
    return Response(
        content=wire.dumps(payload), status_code=status_code, media_type="application/json"
    )


def _error(code: str, message: str) -> Response:
    return _json({"code": code, "message": message}, STATUS_BY_CODE.get(code, 500))


def build_config(variant: str | None, top_k: int | None, threshold: float | None) -> RetrievalConfig:
    """Retrieval config from optional wire fields, on top of the defaults."""
    defaults = RetrievalConfig()
    try:
        return RetrievalConfig(
            variant=DistanceVariant.from_token(variant) if variant else defaults.variant,
            top_k=top_k if top_k is not None else defaults.top_k,
            acceptance_threshold=threshold if threshold is not None else defaults.acceptance_threshold,
        )
    except ValueError as exc:
        raise BadRequest(str(exc)) from exc


def create_app(corpus_path, ui_dir=None) -> FastAPI:
    """Build the service around a corpus file (created empty if absent)."""
    corpus_path = Path(corpus_path)
    if corpus_path.exists():
        store = load_corpus(corpus_path)
    else:
        store = Store()
        save_corpus(store, corpus_path)
    blob_dir = Path(str(corpus_path) + ".blobs")
    blob_dir.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="hannot", docs_url=None, redoc_url=None)
    app.state.store = store
    write_lock = threading.Lock()

    def flush():
        save_corpus(store, corpus_path)

    @app.exception_handler(HannotError)
    async def handle_domain_error(request: Request, exc: HannotError):
        return _error(exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        detail = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        return _error("INVALID_REQUEST", detail)

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        return _error("INTERNAL", "internal error")

    @app.post("/api/images")
    async def upload_image(image: UploadFile = File(...)):
        data = await image.read()
        descriptor = describe_bytes(data, store.params)
        digest = content_hash(data)
        entry = ImageEntry(
            image_id=f"img-{digest[:12]}",
            descriptor=descriptor,
            source_path=image.filename or "",
            content_hash=digest,
        )
        with write_lock:
            result = store.register_image(entry)
            if result.added:
                (blob_dir / digest).write_bytes(data)
                flush()
        stored = store.entry(result.image_id)
        payload = {
            "image_id": result.image_id,
            "point_count": len(stored.descriptor.points),
        }
        if not result.added:
            payload["duplicate_of"] = result.image_id
            return _json(payload, 200)
        return _json(payload, 201)

    @app.post("/api/query")
    async def run_query(body: QueryBody):
        entry = store.entry(body.image_id)
        config = build_config(body.variant, body.top_k, body.threshold)
        try:
            filt = CorpusFilter(
                specialty=body.specialty, class_name=body.class_name, sub_class=body.sub_class
            )
        except ValueError as exc:
            raise BadRequest(str(exc)) from exc
        results = query_similar(entry.descriptor, filt, store, config)
        votes = vote_keywords(results, config)
        return _json(
            {
                "results": [r.to_wire() for r in results],
                "votes": [v.to_wire() for v in votes],
            }
        )

    @app.post("/api/annotations")
    async def annotate(body: AnnotateBody):
        entry = store.entry(body.image_id)
        store.entry(body.selected_image_id)
        with write_lock:
            record = propagate_annotation(
                selected_image_id=body.selected_image_id,
                new_image=entry,
                physician_id=body.physician_id,
                store=store,
                edited_keywords=body.keywords,
            )
            flush()
        return _json(record.to_wire(), 201)

    @app.get("/api/specialties")
    async def specialties():
        return _json({"specialties": store.specialty_hierarchy()})

    @app.get("/api/images/{image_id}/annotations")
    async def image_annotations(image_id: str):
        return _json([r.to_wire() for r in store.records_for(image_id)])

    @app.get("/api/images/{image_id}/raw")
    async def image_raw(image_id: str):
        entry = store.entry(image_id)
        # uploads are content-addressed beside the corpus; images ingested
        # from disk fall back to their recorded source path
        blob = blob_dir / entry.content_hash
        if not blob.exists() and entry.source_path:
            blob = Path(entry.source_path)
        if not blob.exists():
            raise UnknownImageError(f"no stored bytes for image {image_id!r}")
        data = blob.read_bytes()
        return Response(content=data, media_type=sniff_media_type(data))

    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/", include_in_schema=False)
        async def index():
            return RedirectResponse("/ui/")

    return app
