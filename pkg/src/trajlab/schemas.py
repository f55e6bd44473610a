"""Request/response bodies for the labeling service."""

from __future__ import annotations

from pydantic import BaseModel


class OpenSessionRequest(BaseModel):
    path: str


class SessionSummary(BaseModel):
    session_id: str
    path: str
    head: int
    seq: int
    label_frequency: float
    camera_fps: float
    reference_camera: str
    cameras: list[str]
    n_tracklets: int
    n_trajectories: int
    time_span: list[float] | None  # [earliest, latest] sample time, None if empty


class EditRequest(BaseModel):
    client_seq: int
    kind: str
    params: dict


class MutationResponse(BaseModel):
    head: int
    seq: int
    target: str
    created: list[int]
    retired: list[int]
    changed: list[int]


class UndoRequest(BaseModel):
    client_seq: int


class BoxOut(BaseModel):
    tracklet_id: int
    u_min: float
    v_min: float
    u_max: float
    v_max: float
    source: str


class FrameMeta(BaseModel):
    camera_id: str
    frame: int
    time: float | None
    boxes: list[BoxOut]


class TrajectoryItem(BaseModel):
    id: int
    points: list[list[float]]  # [time, x, y] triples
    n_samples: int


class TrajectoryWindow(BaseModel):
    head: int
    items: list[TrajectoryItem]


class OverlayItem(BaseModel):
    id: int
    kind: str  # "tracklet" or "trajectory"
    points: list[list[float]]  # [u, v] pixel pairs
    times: list[float]


class OverlayResponse(BaseModel):
    head: int
    camera_id: str
    items: list[OverlayItem]


class Progress(BaseModel):
    head: int
    seq: int
    action_counts: dict[str, int]
    n_tracklets: int
    n_trajectories: int
    undone_depth: int


class SaveResponse(BaseModel):
    saved: bool
    path: str
