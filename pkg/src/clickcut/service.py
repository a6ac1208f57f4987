"""HTTP session service exposing the interaction loop to clients.

Protocol (JSON bodies unless noted):

    POST /sessions                  raw image bytes (PNG/JPEG), config in query
    POST /sessions/{id}/clicks      {"x", "y", "polarity"}
    GET  /sessions/{id}/mask.png
    GET  /sessions/{id}/guidance/{kind}.png
    POST /sessions/{id}/undo
    GET  /sessions/{id}/state
    POST /sessions/{id}/gt          raw mask bytes; enables the IoU readout

Sessions are in memory; every state is replayable from the click log, so the
service adds no hidden state. Per-session operations are serialized.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query, Request, Response
from fastapi.staticfiles import StaticFiles

from clickcut import guidance, imagecore, segmenter
from clickcut.guidance import (
    NEGATIVE,
    POSITIVE,
    Click,
    ClickState,
    ConstraintViolation,
)
from clickcut.imagecore import BinaryMask, Image, PixelPoint
from clickcut.segmenter import ENCODERS, BackendContext, SegmenterParams
from clickcut.superpixels import SuperpixelMap, slic

GUIDANCE_KINDS = ("sp_pos", "sp_neg", "spbox", "bbox", "bbox_dt", "eu_pos", "eu_neg")


@dataclass
class SessionConfig:
    superpixels: int = 1000
    compactness: float = 10.0
    encoder: str = "sp+spbox"
    backend: str = "graphcut"
    strict: bool = True
    box_mode: str = "center_corner"


@dataclass
class Session:
    id: str
    image: Image
    sp: SuperpixelMap
    config: SessionConfig
    state: ClickState
    mask: BinaryMask
    version: int = 0
    gt: BinaryMask | None = None
    warnings: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def status(self) -> str:
        n = len(self.state.clicks)
        if n == 0:
            return "awaiting_positive_click"
        if n == 1:
            return "awaiting_negative_click"
        return "corrective"


def create_app(ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="clickcut", version="0.1.0")
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    def get_session(sid: str) -> Session:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return sess

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/sessions")
    async def create_session(
        request: Request,
        superpixels: int = Query(default=1000, ge=1),
        compactness: float = Query(default=10.0, gt=0),
        encoder: str = Query(default="sp+spbox"),
        backend: str = Query(default="graphcut"),
        strict: bool = Query(default=True),
        box_mode: str = Query(default="center_corner"),
    ):
        data = await request.body()
        if not data:
            raise HTTPException(status_code=400, detail="empty image body")
        if encoder not in ENCODERS:
            raise HTTPException(status_code=400, detail=f"unknown encoder {encoder!r}")
        if box_mode not in ("center_corner", "corner_pair"):
            raise HTTPException(status_code=400, detail=f"unknown box mode {box_mode!r}")
        try:
            segmenter.resolve_backend(backend)
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            image = imagecore.decode_image(data)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"undecodable image: {exc}")
        if superpixels > image.width * image.height:
            raise HTTPException(status_code=400, detail="more superpixels than pixels")
        config = SessionConfig(superpixels=superpixels, compactness=compactness,
                               encoder=encoder, backend=backend, strict=strict,
                               box_mode=box_mode)
        sp = slic(image, superpixels, compactness)
        sid = uuid.uuid4().hex
        sessions[sid] = Session(
            id=sid, image=image, sp=sp, config=config,
            state=ClickState(clicks=(), box=None, strict_validation=strict),
            mask=BinaryMask.empty(image.width, image.height),
        )
        return {"session_id": sid, "status": sessions[sid].status,
                "width": image.width, "height": image.height,
                "superpixel_count": sp.count, "version": 0}

    @app.post("/sessions/{sid}/clicks")
    def post_click(sid: str, payload: dict = Body(...)):
        sess = get_session(sid)
        with sess.lock:
            try:
                x, y = int(payload["x"]), int(payload["y"])
                polarity = str(payload["polarity"])
            except (KeyError, TypeError, ValueError):
                raise HTTPException(status_code=400,
                                    detail="body must carry x, y, polarity")
            if polarity not in (POSITIVE, NEGATIVE):
                raise HTTPException(status_code=400, detail=f"bad polarity {polarity!r}")
            if not sess.image.contains(PixelPoint(x, y)):
                raise HTTPException(status_code=400, detail="click out of bounds")
            point = PixelPoint(x, y)
            n = len(sess.state.clicks)
            new_warnings: list[str] = []
            if n == 0:
                if polarity != POSITIVE:
                    raise HTTPException(status_code=409,
                                        detail="initial click must be positive (object centre)")
                sess.state = ClickState(clicks=(Click(POSITIVE, point, 0),), box=None,
                                        strict_validation=sess.config.strict)
            elif n == 1:
                if polarity != NEGATIVE:
                    raise HTTPException(
                        status_code=409,
                        detail="second click must be negative (background near the object)")
                click = Click(NEGATIVE, point, 0)
                try:
                    sess.state = guidance.initial_state(
                        sess.state.clicks[0], click, sess.sp,
                        mode=sess.config.box_mode, strict=sess.config.strict)
                except ValueError as exc:
                    raise HTTPException(status_code=409, detail=str(exc))
            else:
                click = Click(polarity, point, index=max(c.index for c in sess.state.clicks) + 1)
                before = len(sess.state.warnings)
                try:
                    sess.state = guidance.update_box(sess.state, sess.sp, click)
                except ConstraintViolation as exc:
                    raise HTTPException(
                        status_code=409,
                        detail={"error": str(exc), "allowed_region": exc.allowed_region})
                new_warnings = list(sess.state.warnings[before:])
            sess.version += 1
            if sess.state.box is not None:
                _resegment(sess)
            sess.warnings.extend(new_warnings)
            return _state_payload(sess, new_warnings)

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        sess = get_session(sid)
        with sess.lock:
            return _state_payload(sess, [])

    @app.get("/sessions/{sid}/mask.png")
    def get_mask(sid: str):
        sess = get_session(sid)
        with sess.lock:
            return Response(content=imagecore.mask_png_bytes(sess.mask),
                            media_type="image/png",
                            headers={"X-Mask-Version": str(sess.version)})

    @app.get("/sessions/{sid}/guidance/{kind}.png")
    def get_guidance(sid: str, kind: str):
        sess = get_session(sid)
        with sess.lock:
            gmap = _guidance_map(sess, kind)
            return Response(content=guidance.guidance_png_bytes(gmap),
                            media_type="image/png")

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str):
        sess = get_session(sid)
        with sess.lock:
            if not sess.state.clicks:
                raise HTTPException(status_code=409, detail="nothing to undo")
            clicks = sess.state.clicks[:-1]
            sess.state = guidance.replay(clicks, sess.sp, sess.config.box_mode,
                                         sess.config.strict)
            sess.version += 1
            if sess.state.box is not None:
                _resegment(sess)
            else:
                sess.mask = BinaryMask.empty(sess.image.width, sess.image.height)
            return _state_payload(sess, [])

    @app.post("/sessions/{sid}/gt")
    async def upload_gt(sid: str, request: Request):
        sess = get_session(sid)
        data = await request.body()
        try:
            gt = imagecore.decode_mask(data)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"undecodable mask: {exc}")
        if gt.extent != sess.image.extent:
            raise HTTPException(status_code=400, detail="mask extent mismatch")
        if not gt.bits.any():
            raise HTTPException(status_code=400, detail="ground truth mask is empty")
        with sess.lock:
            sess.gt = gt
            return {"iou": imagecore.iou(sess.mask, gt)}

    def _resegment(sess: Session) -> None:
        backend = segmenter.resolve_backend(sess.config.backend)
        bundle = segmenter.build_bundle(sess.sp, sess.state, sess.config.encoder)
        result = backend(sess.image, sess.sp, bundle, SegmenterParams(),
                         BackendContext(clicks_total=len(sess.state.clicks), gt=sess.gt))
        sess.mask = result.mask
        sess.warnings.extend(result.warnings)

    def _guidance_map(sess: Session, kind: str):
        sp, state = sess.sp, sess.state
        extent = sess.image.extent
        if kind == "sp_pos":
            return guidance.superpixel_guidance(sp, state.clicks, POSITIVE)
        if kind == "sp_neg":
            return guidance.superpixel_guidance(sp, state.clicks, NEGATIVE)
        if kind == "eu_pos":
            return guidance.euclidean_guidance(state.clicks, POSITIVE, extent)
        if kind == "eu_neg":
            return guidance.euclidean_guidance(state.clicks, NEGATIVE, extent)
        if kind in ("spbox", "bbox", "bbox_dt"):
            if state.box is None:
                raise HTTPException(status_code=409, detail="box not initialized yet")
            if kind == "spbox":
                return guidance.spbox_guidance(sp, state.box)
            if kind == "bbox":
                return guidance.bbox_guidance(state.box, extent)
            return guidance.bbox_dt_guidance(state.box, extent)
        raise HTTPException(status_code=404, detail=f"unknown guidance kind {kind!r}")

    def _state_payload(sess: Session, new_warnings) -> dict:
        state = sess.state
        box = None
        if state.box is not None:
            box = {
                "e0": {"x": state.box.e0.x, "y": state.box.e0.y},
                "e1": {"x": state.box.e1.x, "y": state.box.e1.y},
                "boxed_count": len(state.box.boxed_set),
            }
        payload = {
            "session_id": sess.id,
            "status": sess.status,
            "version": sess.version,
            "strict": sess.config.strict,
            "encoder": sess.config.encoder,
            "width": sess.image.width,
            "height": sess.image.height,
            "clicks": [
                {"x": c.position.x, "y": c.position.y, "polarity": c.polarity,
                 "index": c.index}
                for c in state.clicks
            ],
            "box": box,
            "warnings": list(new_warnings),
            "iou": imagecore.iou(sess.mask, sess.gt) if sess.gt is not None else None,
        }
        return payload

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


app = create_app()
