"""HTTP service backing the label-correction workflow.

One writer per session: every mutation takes the session lock, is validated
against the client's last-seen ``head`` token (409 on mismatch), journaled
durably (append + fsync) before acknowledgement, and answered with the new
head plus the minimal diff of created/retired/changed ids. ``head`` is a
monotone mutation counter — edits, undo, and redo all advance it, so a
client holding a stale view can never mutate on top of a store it has not
seen, even when the log seq has returned to an earlier value via undo.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse, JSONResponse

from . import editops, schemas
from .errors import EditError, TrajlabError
from .geometry import project_many
from .model import Session
from .store import journal_apply, journal_redo, journal_undo, load_session, save_session

WINDOW_EPS = 1e-9


@dataclass
class SessionHandle:
    session: Session
    path: Path
    head: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def _decimate(n: int, resolution: int) -> np.ndarray:
    if n <= resolution:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, resolution).round().astype(int))


def create_app() -> FastAPI:
    app = FastAPI(title="trajlab labeling service")
    registry: dict[str, SessionHandle] = {}
    app.state.registry = registry

    @app.exception_handler(TrajlabError)
    async def _trajlab_error(request: Request, exc: TrajlabError):
        status = 422 if isinstance(exc, EditError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    def handle_of(session_id: str) -> SessionHandle:
        handle = registry.get(session_id)
        if handle is None:
            raise HTTPException(404, detail=f"no open session {session_id!r}")
        return handle

    def time_span(s) -> list[float] | None:
        lo = math.inf
        hi = -math.inf
        for tj in s.trajectories.values():
            if tj.samples:
                lo = min(lo, tj.samples[0][0])
                hi = max(hi, tj.samples[-1][0])
        for t in s.tracklets.values():
            offset = s.sync_offsets.get(t.camera_id)
            if offset is None or not t.samples:
                continue
            lo = min(lo, (t.samples[0][0] - offset) / s.camera_fps)
            hi = max(hi, (t.samples[-1][0] - offset) / s.camera_fps)
        return None if lo > hi else [lo, hi]

    def summary(handle: SessionHandle) -> schemas.SessionSummary:
        s = handle.session
        applied = s.action_log.applied
        return schemas.SessionSummary(
            session_id=s.session_id,
            path=str(handle.path),
            head=handle.head,
            seq=applied[-1].seq if applied else 0,
            label_frequency=s.label_frequency,
            camera_fps=s.camera_fps,
            reference_camera=s.reference_camera,
            cameras=s.camera_ids(),
            n_tracklets=len(s.tracklets),
            n_trajectories=len(s.trajectories),
            time_span=time_span(s),
        )

    def mutation_response(handle: SessionHandle, result: editops.ActionResult) -> schemas.MutationResponse:
        applied = handle.session.action_log.applied
        return schemas.MutationResponse(
            head=handle.head,
            seq=applied[-1].seq if applied else 0,
            target=result.target,
            created=result.created,
            retired=result.retired,
            changed=result.changed,
        )

    @app.get("/sessions", response_model=list[schemas.SessionSummary])
    def list_sessions():
        return [summary(h) for h in registry.values()]

    @app.post("/sessions/open", response_model=schemas.SessionSummary)
    def open_session(body: schemas.OpenSessionRequest):
        path = Path(body.path).resolve()
        session = load_session(path)
        existing = registry.get(session.session_id)
        if existing is not None:
            if existing.path != path:
                raise HTTPException(
                    409, detail=f"session {session.session_id!r} already open from {existing.path}"
                )
            return summary(existing)  # in-memory state stays authoritative
        handle = SessionHandle(session=session, path=path)
        registry[session.session_id] = handle
        return summary(handle)

    @app.get("/sessions/{session_id}", response_model=schemas.SessionSummary)
    def get_session(session_id: str):
        return summary(handle_of(session_id))

    @app.post("/sessions/{session_id}/save", response_model=schemas.SaveResponse)
    def save(session_id: str):
        handle = handle_of(session_id)
        with handle.lock:
            save_session(handle.session, handle.path)
        return schemas.SaveResponse(saved=True, path=str(handle.path))

    @app.post("/sessions/{session_id}/edits", response_model=schemas.MutationResponse)
    def submit_edit(session_id: str, body: schemas.EditRequest):
        handle = handle_of(session_id)
        with handle.lock:
            if body.client_seq != handle.head:
                raise HTTPException(409, detail=f"stale client_seq {body.client_seq}; head is {handle.head}")
            had_undone = bool(handle.session.action_log.undone)
            try:
                result = editops.apply_action(handle.session, body.kind, body.params)
            except EditError as e:
                raise HTTPException(422, detail=str(e)) from None
            journal_apply(handle.path, handle.session, had_undone)
            handle.head += 1
            return mutation_response(handle, result)

    @app.post("/sessions/{session_id}/undo", response_model=schemas.MutationResponse)
    def undo(session_id: str, body: schemas.UndoRequest):
        handle = handle_of(session_id)
        with handle.lock:
            if body.client_seq != handle.head:
                raise HTTPException(409, detail=f"stale client_seq {body.client_seq}; head is {handle.head}")
            try:
                result = editops.undo(handle.session)
            except EditError as e:
                raise HTTPException(422, detail=str(e)) from None
            journal_undo(handle.path, handle.session)
            handle.head += 1
            return mutation_response(handle, result)

    @app.post("/sessions/{session_id}/redo", response_model=schemas.MutationResponse)
    def redo(session_id: str, body: schemas.UndoRequest):
        handle = handle_of(session_id)
        with handle.lock:
            if body.client_seq != handle.head:
                raise HTTPException(409, detail=f"stale client_seq {body.client_seq}; head is {handle.head}")
            try:
                result = editops.redo(handle.session)
            except EditError as e:
                raise HTTPException(422, detail=str(e)) from None
            journal_redo(handle.path, handle.session)
            handle.head += 1
            return mutation_response(handle, result)

    @app.get("/sessions/{session_id}/progress", response_model=schemas.Progress)
    def progress(session_id: str):
        handle = handle_of(session_id)
        with handle.lock:
            s = handle.session
            applied = s.action_log.applied
            return schemas.Progress(
                head=handle.head,
                seq=applied[-1].seq if applied else 0,
                action_counts=editops.action_counts(s),
                n_tracklets=len(s.tracklets),
                n_trajectories=len(s.trajectories),
                undone_depth=len(s.action_log.undone),
            )

    @app.get("/sessions/{session_id}/cameras/{camera_id}/frames/{frame}")
    def frame_image(session_id: str, camera_id: str, frame: int):
        handle = handle_of(session_id)
        if camera_id not in handle.session.camera_ids():
            raise HTTPException(404, detail=f"unknown camera {camera_id!r}")
        for ext in ("jpg", "jpeg", "png"):
            path = handle.path / "frames" / camera_id / f"{frame:06d}.{ext}"
            if path.exists():
                return FileResponse(path)
        raise HTTPException(404, detail=f"no image for camera {camera_id!r} frame {frame}")

    @app.get("/sessions/{session_id}/cameras/{camera_id}/frames/{frame}/meta", response_model=schemas.FrameMeta)
    def frame_meta(session_id: str, camera_id: str, frame: int):
        handle = handle_of(session_id)
        with handle.lock:
            s = handle.session
            if camera_id not in s.camera_ids():
                raise HTTPException(404, detail=f"unknown camera {camera_id!r}")
            offset = s.sync_offsets.get(camera_id)
            time = None if offset is None else (frame - offset) / s.camera_fps
            boxes = []
            for tid in sorted(s.tracklets):
                t = s.tracklets[tid]
                if t.camera_id != camera_id:
                    continue
                for f, box in t.samples:
                    if f == frame:
                        boxes.append(
                            schemas.BoxOut(
                                tracklet_id=tid,
                                u_min=box.u_min,
                                v_min=box.v_min,
                                u_max=box.u_max,
                                v_max=box.v_max,
                                source=t.source,
                            )
                        )
                        break
            return schemas.FrameMeta(camera_id=camera_id, frame=frame, time=time, boxes=boxes)

    @app.get("/sessions/{session_id}/trajectories", response_model=schemas.TrajectoryWindow)
    def trajectory_window(
        session_id: str,
        t0: float = Query(...),
        t1: float = Query(...),
        resolution: int = Query(200, ge=2),
    ):
        handle = handle_of(session_id)
        if t1 < t0:
            raise HTTPException(422, detail=f"empty window [{t0}, {t1}]")
        with handle.lock:
            s = handle.session
            items = []
            for pid in sorted(s.trajectories):
                traj = s.trajectories[pid]
                sel = [smp for smp in traj.samples if t0 - WINDOW_EPS <= smp[0] <= t1 + WINDOW_EPS]
                if not sel:
                    continue
                idx = _decimate(len(sel), resolution)
                items.append(
                    schemas.TrajectoryItem(
                        id=pid,
                        points=[[sel[i][0], sel[i][1], sel[i][2]] for i in idx],
                        n_samples=len(sel),
                    )
                )
            return schemas.TrajectoryWindow(head=handle.head, items=items)

    @app.get("/sessions/{session_id}/overlay", response_model=schemas.OverlayResponse)
    def overlay(
        session_id: str,
        camera_id: str = Query(...),
        t0: float = Query(...),
        t1: float = Query(...),
        resolution: int = Query(200, ge=2),
    ):
        handle = handle_of(session_id)
        if t1 < t0:
            raise HTTPException(422, detail=f"empty window [{t0}, {t1}]")
        with handle.lock:
            s = handle.session
            if camera_id not in s.camera_ids():
                raise HTTPException(404, detail=f"unknown camera {camera_id!r}")
            camera = s.camera(camera_id)
            offset = s.sync_offsets.get(camera_id, 0)
            items = []
            for tid in sorted(s.tracklets):
                t = s.tracklets[tid]
                if t.camera_id != camera_id:
                    continue
                sel = [
                    (f, box)
                    for f, box in t.samples
                    if t0 - WINDOW_EPS <= (f - offset) / s.camera_fps <= t1 + WINDOW_EPS
                ]
                if not sel:
                    continue
                idx = _decimate(len(sel), resolution)
                items.append(
                    schemas.OverlayItem(
                        id=tid,
                        kind="tracklet",
                        points=[list(sel[i][1].anchor()) for i in idx],
                        times=[(sel[i][0] - offset) / s.camera_fps for i in idx],
                    )
                )
            for pid in sorted(s.trajectories):
                traj = s.trajectories[pid]
                sel = [smp for smp in traj.samples if t0 - WINDOW_EPS <= smp[0] <= t1 + WINDOW_EPS]
                if not sel:
                    continue
                idx = _decimate(len(sel), resolution)
                pts = np.array([[sel[i][1], sel[i][2], sel[i][3]] for i in idx])
                uv, z = project_many(camera, pts)
                front = z > 0
                items.append(
                    schemas.OverlayItem(
                        id=pid,
                        kind="trajectory",
                        points=[[float(u), float(v)] for u, v in uv[front]],
                        times=[float(sel[i][0]) for i, keep in zip(idx, front) if keep],
                    )
                )
            return schemas.OverlayResponse(head=handle.head, camera_id=camera_id, items=items)

    return app
