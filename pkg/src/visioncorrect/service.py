"""Local HTTP service exposing the correction engine to the demo UI.

Sessions are in-memory and vanish on restart.  Within a session, pose
updates serialize through one worker; newer updates supersede queued ones
(latest wins), and frame reads always see the last completed generation,
so a `simulated` PNG and the metrics reported next to it always come from
the same kernel.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from . import image as img
from .config import EngineConfig
from .errors import VisionCorrectError
from .metrics import MetricsReport, compare, diff_map
from .pose import ViewerPose, pose_to_kernel
from .precorrect import WienerParams, precorrect_color, deconvolve, simulate_view
from .psf import Kernel, OpticalSpec, delta_kernel
from .ringing import HeuristicTextDetector, segment_precorrect


class OpticalSpecBody(BaseModel):
    pupil_diameter_m: float = 0.004
    focal_length_m: float = 0.0168
    eye_depth_m: float = 0.017
    view_distance_m: float = 1.0
    pixel_pitch_m: float = 0.000254


class SessionBody(BaseModel):
    sphere_diopters: float | None = None
    optical_spec: OpticalSpecBody | None = None
    rho: float = Field(default=0.05, ge=0)
    rho_text: float = Field(default=0.15, ge=0)
    ringing: bool = False


class PoseBody(BaseModel):
    distance_m: float = Field(gt=0)
    theta_x_rad: float = Field(gt=-math.pi / 2, lt=math.pi / 2)
    theta_y_rad: float = Field(gt=-math.pi / 2, lt=math.pi / 2)


@dataclass
class Snapshot:
    """One completed correction generation; everything here is consistent."""

    generation: int
    kernel: Kernel
    pose: ViewerPose | None
    precorrected: img.RasterImage
    simulated: img.RasterImage
    metrics: MetricsReport
    processing_ms: float


@dataclass
class Session:
    id: str
    optics: OpticalSpec
    params: WienerParams
    ringing: bool
    image: img.RasterImage | None = None
    snapshot: Snapshot | None = None
    pending_pose: ViewerPose | None = None
    applied_pose: ViewerPose | None = None
    generation: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    wake: threading.Event = field(default_factory=threading.Event)
    listeners: list[queue.Queue] = field(default_factory=list)
    stop: bool = False

    def emit(self, event: dict) -> None:
        with self.lock:
            targets = list(self.listeners)
        for q in targets:
            q.put(event)


def _compute_snapshot(session: Session, pose: ViewerPose | None, generation: int) -> Snapshot:
    t0 = time.perf_counter()
    source = session.image
    if pose is None:
        kernel = delta_kernel()
    else:
        kernel = pose_to_kernel(pose, session.optics.with_distance(pose.distance_m))
    if kernel.is_delta():
        precorrected = source  # in-focus viewer: nothing to invert
    elif session.ringing:
        precorrected = segment_precorrect(source, kernel, session.params, HeuristicTextDetector())
    elif source.colorspace == img.RGB:
        precorrected = precorrect_color(source, kernel, session.params)
    else:
        precorrected = deconvolve(source, kernel, session.params)
    simulated = simulate_view(precorrected, kernel)
    report = compare(simulated, source)
    ms = (time.perf_counter() - t0) * 1000.0
    return Snapshot(generation, kernel, pose, precorrected, simulated, report, ms)


def _session_worker(session: Session) -> None:
    while True:
        session.wake.wait()
        session.wake.clear()
        if session.stop:
            return
        while True:
            with session.lock:
                pose = session.pending_pose
                session.pending_pose = None
                if pose is None or session.image is None:
                    break
                session.generation += 1
                generation = session.generation
            snap = _compute_snapshot(session, pose, generation)
            with session.lock:
                # a newer generation may have been queued meanwhile; publishing
                # an older snapshot is fine, the loop immediately replaces it
                session.snapshot = snap
                session.applied_pose = pose
            session.emit({
                "event": "frame_ready",
                "generation": snap.generation,
                "processing_ms": round(snap.processing_ms, 3),
            })


def create_app(config: EngineConfig | None = None, ui_dir: str | None = None) -> FastAPI:
    cfg = config or EngineConfig()
    app = FastAPI(title="visioncorrect")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    counter = itertools.count(1)
    registry_lock = threading.Lock()

    @app.get("/health")
    def health():
        return {"ok": True, "sessions": len(sessions)}

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.post("/session")
    def create_session(body: SessionBody):
        if body.sphere_diopters is not None:
            optics = OpticalSpec.from_diopters(
                body.sphere_diopters,
                pupil_diameter_m=cfg.pupil_diameter_m,
                pixel_pitch_m=cfg.pixel_pitch_m,
                eye_depth_m=cfg.eye_depth_m,
            )
        elif body.optical_spec is not None:
            optics = OpticalSpec(**body.optical_spec.model_dump())
        else:
            raise HTTPException(
                status_code=422,
                detail=[{"loc": ["body", "sphere_diopters"],
                         "msg": "either sphere_diopters or optical_spec is required"}],
            )
        try:
            params = WienerParams(rho=body.rho, rho_text=max(body.rho_text, body.rho),
                                  spectrum_floor=cfg.spectrum_floor)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = f"s{next(counter)}"
        session = Session(id=session_id, optics=optics, params=params, ringing=body.ringing)
        threading.Thread(target=_session_worker, args=(session,), daemon=True).start()
        with registry_lock:
            sessions[session_id] = session
        return {"id": session_id}

    @app.put("/session/{session_id}/image")
    async def put_image(session_id: str, request: Request):
        session = get_session(session_id)
        data = await request.body()
        try:
            picture = img.load_png(data)
        except Exception:
            raise HTTPException(status_code=422, detail=[
                {"loc": ["body"], "msg": "body must be a PNG image"}])
        with session.lock:
            last_pose = session.pending_pose or session.applied_pose
            session.image = picture
            session.snapshot = None
            session.applied_pose = None
            session.pending_pose = last_pose  # re-run the last pose on the new image
        if last_pose is not None:
            session.wake.set()
        return {"width": picture.width, "height": picture.height,
                "colorspace": picture.colorspace}

    @app.put("/session/{session_id}/pose")
    def put_pose(session_id: str, body: PoseBody):
        session = get_session(session_id)
        pose = ViewerPose(body.distance_m, body.theta_x_rad, body.theta_y_rad)
        with session.lock:
            if session.image is None:
                raise HTTPException(status_code=409, detail="upload an image first")
            reference = session.pending_pose or session.applied_pose
            changed = pose.differs_from(reference)
            if changed:
                session.pending_pose = pose  # latest wins
            generation = session.generation
        if changed:
            session.wake.set()
        return {"accepted": True, "regenerating": changed, "generation": generation}

    @app.get("/session/{session_id}/frame")
    def get_frame(session_id: str, view: str = "precorrected"):
        session = get_session(session_id)
        with session.lock:
            source = session.image
            snap = session.snapshot
        if source is None:
            raise HTTPException(status_code=409, detail="no image uploaded")
        if view == "original":
            return Response(img.png_bytes(source), media_type="image/png")
        if snap is None:
            raise HTTPException(status_code=409, detail="no pose processed yet")
        if view == "precorrected":
            out = snap.precorrected
        elif view == "simulated":
            out = snap.simulated
        elif view == "diff":
            out = diff_map(source, snap.simulated)
        elif view == "psf":
            return Response(snap.kernel.to_png_bytes(), media_type="image/png")
        else:
            raise HTTPException(status_code=422, detail=[
                {"loc": ["query", "view"],
                 "msg": "view must be precorrected|simulated|original|psf|diff"}])
        return Response(
            img.png_bytes(out), media_type="image/png",
            headers={"X-Generation": str(snap.generation)},
        )

    @app.get("/session/{session_id}/metrics")
    def get_metrics(session_id: str):
        session = get_session(session_id)
        with session.lock:
            snap = session.snapshot
        if snap is None:
            raise HTTPException(status_code=409, detail="no pose processed yet")
        payload = snap.metrics.as_dict()
        payload["generation"] = snap.generation
        return payload

    @app.get("/session/{session_id}/events")
    def get_events(session_id: str, limit: int = 0):
        session = get_session(session_id)
        q: queue.Queue = queue.Queue()
        with session.lock:
            session.listeners.append(q)

        def stream():
            sent = 0
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event = q.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(event)}\n\n"
                    sent += 1
                    if limit and sent >= limit:
                        return
            finally:
                with session.lock:
                    if q in session.listeners:
                        session.listeners.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.exception_handler(VisionCorrectError)
    def engine_error(_request, exc: VisionCorrectError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"detail": str(exc)})

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def main(argv: list[str] | None = None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="visioncorrect-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--config", default=None)
    parser.add_argument("--ui", default=None, help="serve a static UI directory at /ui")
    args = parser.parse_args(argv)
    cfg = EngineConfig()
    if args.config:
        cfg.apply_file(args.config)
    uvicorn.run(create_app(cfg, ui_dir=args.ui), host=args.host, port=args.port,
                log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
