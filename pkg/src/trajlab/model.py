"""Session data model: cameras, tracklets, metric trajectories, landmarks, edit log.

All mutation of a session happens through the edit operations in
:mod:`trajlab.editops` or the pipeline steps; everything here is the data
layer plus invariant checking. Sessions are plain mutable objects; readers
that need isolation take :func:`snapshot` copies and all writers go through
a single owner (see the service layer).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import ModelError

SOURCES = ("auto", "manual", "mixed")
EDIT_KINDS = ("Break", "Join", "Delete", "Disentangle", "Relabel", "AddMissing")

# Grid alignment tolerance for trajectory timestamps, seconds.
TIME_TOL = 1e-9


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image coordinates, origin top-left, pixels."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self) -> None:
        # Accept numpy scalars but store plain floats so repr/serialization
        # stays interchange-clean.
        for name in ("u_min", "v_min", "u_max", "v_max"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def valid(self) -> bool:
        vals = (self.u_min, self.v_min, self.u_max, self.v_max)
        return all(math.isfinite(v) for v in vals) and self.u_min < self.u_max and self.v_min < self.v_max

    def anchor(self) -> tuple[float, float]:
        """Ground-contact point of the detection: bottom-center of the box."""
        return ((self.u_min + self.u_max) / 2.0, self.v_max)

    def center(self) -> tuple[float, float]:
        return ((self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0)


@dataclass
class Tracklet:
    """Pixel-space trajectory of one pedestrian in one camera.

    ``samples`` is a frame-sorted list of ``(frame, bbox)`` with at most one
    sample per frame; frames are camera-local indices before sync.
    """

    id: int
    camera_id: str
    samples: list[tuple[int, BBox]]
    source: str = "auto"

    def frames(self) -> list[int]:
        return [f for f, _ in self.samples]

    def first_frame(self) -> int:
        return self.samples[0][0]

    def last_frame(self) -> int:
        return self.samples[-1][0]


@dataclass
class CameraModel:
    """Pinhole camera with two radial distortion terms and a rigid pose.

    ``R`` (3x3, world->camera) and ``t`` (meters) satisfy X_cam = R @ X + t.
    """

    camera_id: str
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    R: np.ndarray = None  # type: ignore[assignment]
    t: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.R = np.eye(3) if self.R is None else np.asarray(self.R, dtype=float).reshape(3, 3)
        self.t = np.zeros(3) if self.t is None else np.asarray(self.t, dtype=float).reshape(3)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and (self.fx, self.fy, self.cx, self.cy, self.k1, self.k2)
            == (other.fx, other.fy, other.cx, other.cy, other.k1, other.k2)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.t, other.t)
        )


@dataclass
class Landmark:
    """Surveyed world point with its pixel observations per camera."""

    world: tuple[float, float, float]
    observations: dict[str, tuple[float, float]]


@dataclass
class MetricTrajectory:
    """Ground-plane trajectory in meters on the session label grid.

    ``samples`` is a list of ``(time, x, y, z)``; every time sits on the
    uniform 1/label_frequency grid. Gaps (missing grid instants) are legal
    after Join edits and are only filled at export time. ``z`` is kept
    internally and dropped from released labels.
    """

    ped_id: int
    samples: list[tuple[float, float, float, float]]
    source_tracklets: list[tuple[str, int]] = field(default_factory=list)

    def times(self) -> list[float]:
        return [s[0] for s in self.samples]


@dataclass
class EditAction:
    """One replayable correction, with enough captured state to undo it."""

    seq: int
    kind: str
    params: dict
    inverse: dict
    ts: str


@dataclass
class ActionLog:
    applied: list[EditAction] = field(default_factory=list)
    undone: list[EditAction] = field(default_factory=list)


@dataclass
class SessionConfig:
    session_id: str
    cameras: list[CameraModel]
    label_frequency: float
    camera_fps: float | None = None
    reference_camera: str | None = None
    # camera ids whose configured pose is already trusted (precalibrated rigs)
    calibrated: list[str] = field(default_factory=list)


@dataclass
class Session:
    session_id: str
    label_frequency: float
    camera_fps: float
    cameras: list[CameraModel]
    reference_camera: str
    sync_offsets: dict[str, int] = field(default_factory=dict)
    tracklets: dict[int, Tracklet] = field(default_factory=dict)
    trajectories: dict[int, MetricTrajectory] = field(default_factory=dict)
    landmarks: list[Landmark] = field(default_factory=list)
    # camera_id -> {"source": "config"|"landmarks", "residual_px": float}
    calibration: dict[str, dict] = field(default_factory=dict)
    action_log: ActionLog = field(default_factory=ActionLog)
    next_tracklet_id: int = 1
    next_trajectory_id: int = 1

    def camera(self, camera_id: str) -> CameraModel:
        for cam in self.cameras:
            if cam.camera_id == camera_id:
                return cam
        raise ModelError(f"unknown camera {camera_id!r}")

    def camera_ids(self) -> list[str]:
        return [c.camera_id for c in self.cameras]

    def mint_tracklet_id(self) -> int:
        tid = self.next_tracklet_id
        self.next_tracklet_id += 1
        return tid

    def mint_trajectory_id(self) -> int:
        pid = self.next_trajectory_id
        self.next_trajectory_id += 1
        return pid

    def add_tracklet(self, tracklet: Tracklet) -> int:
        """Adopt a tracklet under a fresh session id."""
        tid = self.mint_tracklet_id()
        self.tracklets[tid] = Tracklet(tid, tracklet.camera_id, list(tracklet.samples), tracklet.source)
        return tid


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def create_session(config: SessionConfig) -> Session:
    """Build an empty session store from a validated configuration."""
    if not config.cameras:
        raise ModelError("a session needs at least one camera")
    ids = [c.camera_id for c in config.cameras]
    if len(set(ids)) != len(ids):
        raise ModelError(f"duplicate camera ids: {sorted(ids)}")
    if not (config.label_frequency > 0):
        raise ModelError("label frequency must be positive")
    fps = config.camera_fps if config.camera_fps is not None else config.label_frequency
    if not (fps > 0):
        raise ModelError("camera fps must be positive")
    ref = config.reference_camera if config.reference_camera is not None else ids[0]
    if ref not in ids:
        raise ModelError(f"reference camera {ref!r} not in camera list")
    for cid in config.calibrated:
        if cid not in ids:
            raise ModelError(f"calibrated camera {cid!r} not in camera list")
    session = Session(
        session_id=config.session_id,
        label_frequency=float(config.label_frequency),
        camera_fps=float(fps),
        cameras=list(config.cameras),
        reference_camera=ref,
        sync_offsets={ref: 0},
        calibration={cid: {"source": "config"} for cid in config.calibrated},
    )
    return session


def snapshot(session: Session) -> Session:
    """Deep, independent copy for concurrent readers or replay baselines."""
    return copy.deepcopy(session)


def grid_index(time: float, frequency: float) -> int:
    """Index of a timestamp on the uniform label grid."""
    return int(round(time * frequency))


def on_grid(time: float, frequency: float) -> bool:
    k = grid_index(time, frequency)
    return abs(time - k / frequency) <= TIME_TOL


# ---------------------------------------------------------------------------
# validation


def _check_rotation(R: np.ndarray) -> str | None:
    err = float(np.linalg.norm(R.T @ R - np.eye(3)))
    if err >= 1e-9:
        return f"R not orthonormal (|R'R-I|={err:.2e})"
    det = float(np.linalg.det(R))
    if not (1 - 1e-9 <= det <= 1 + 1e-9):
        return f"det(R)={det:.6f} is not +1"
    return None


def validate(session: Session) -> list[str]:
    """Return every invariant violation in the session; [] when healthy."""
    errs: list[str] = []
    if not (session.label_frequency > 0):
        errs.append("label_frequency must be positive")
    if not (session.camera_fps > 0):
        errs.append("camera_fps must be positive")

    ids = session.camera_ids()
    if not ids:
        errs.append("session has no cameras")
    if len(set(ids)) != len(ids):
        errs.append("duplicate camera ids")
    if session.reference_camera not in ids:
        errs.append(f"reference camera {session.reference_camera!r} missing")
    elif session.sync_offsets.get(session.reference_camera) != 0:
        errs.append("reference camera offset must be 0")

    for cam in session.cameras:
        if not (cam.fx > 0 and cam.fy > 0):
            errs.append(f"camera {cam.camera_id}: non-positive focal length")
        for name, v in (("fx", cam.fx), ("fy", cam.fy), ("cx", cam.cx), ("cy", cam.cy), ("k1", cam.k1), ("k2", cam.k2)):
            if not math.isfinite(v):
                errs.append(f"camera {cam.camera_id}: {name} not finite")
        rot_err = _check_rotation(cam.R)
        if rot_err:
            errs.append(f"camera {cam.camera_id}: {rot_err}")
        if not np.all(np.isfinite(cam.t)):
            errs.append(f"camera {cam.camera_id}: t not finite")

    for cid, off in session.sync_offsets.items():
        if cid not in ids:
            errs.append(f"sync offset for unknown camera {cid!r}")
        if not isinstance(off, int):
            errs.append(f"sync offset for {cid!r} is not an integer")

    for tid, tr in session.tracklets.items():
        label = f"tracklet {tid}"
        if tr.id != tid:
            errs.append(f"{label}: key/id mismatch")
        if tr.camera_id not in ids:
            errs.append(f"{label}: unknown camera {tr.camera_id!r}")
        if tr.source not in SOURCES:
            errs.append(f"{label}: bad source {tr.source!r}")
        if not tr.samples:
            errs.append(f"{label}: empty")
            continue
        frames = tr.frames()
        if any(not isinstance(f, int) for f in frames):
            errs.append(f"{label}: non-integer frame")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            errs.append(f"{label}: frames not strictly increasing")
        if any(not box.valid() for _, box in tr.samples):
            errs.append(f"{label}: invalid bbox")
        if tid >= session.next_tracklet_id:
            errs.append(f"{label}: id beyond the mint counter")

    f = session.label_frequency
    for pid, traj in session.trajectories.items():
        label = f"trajectory {pid}"
        if traj.ped_id != pid:
            errs.append(f"{label}: key/id mismatch")
        if not traj.samples:
            errs.append(f"{label}: empty")
            continue
        times = traj.times()
        if any(b <= a for a, b in zip(times, times[1:])):
            errs.append(f"{label}: times not strictly increasing")
        if any(not on_grid(t, f) for t in times):
            errs.append(f"{label}: time off the 1/{f} grid")
        for s in traj.samples:
            if any(not math.isfinite(v) for v in s):
                errs.append(f"{label}: non-finite sample")
                break
        for cid, _tid in traj.source_tracklets:
            if cid not in ids:
                errs.append(f"{label}: source tracklet camera {cid!r} unknown")
        if pid >= session.next_trajectory_id:
            errs.append(f"{label}: id beyond the mint counter")

    for i, lm in enumerate(session.landmarks):
        if not lm.observations:
            errs.append(f"landmark {i}: no observations")
        if any(not math.isfinite(v) for v in lm.world):
            errs.append(f"landmark {i}: world point not finite")
        for cid in lm.observations:
            if cid not in ids:
                errs.append(f"landmark {i}: observation from unknown camera {cid!r}")

    log = session.action_log
    for i, action in enumerate(log.applied):
        if action.seq != i + 1:
            errs.append(f"action log: seq {action.seq} at position {i} breaks contiguity")
        if action.kind not in EDIT_KINDS:
            errs.append(f"action log: unknown kind {action.kind!r}")
        if not action.inverse:
            errs.append(f"action log: seq {action.seq} has an empty inverse payload")
    return errs


# ---------------------------------------------------------------------------
# plain-dict converters (shared by the store, the edit log, and the service)


def bbox_to_list(b: BBox) -> list[float]:
    return [b.u_min, b.v_min, b.u_max, b.v_max]


def bbox_from_list(v) -> BBox:
    return BBox(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


def tracklet_to_dict(t: Tracklet) -> dict:
    return {
        "id": t.id,
        "camera_id": t.camera_id,
        "source": t.source,
        "samples": [[f, bbox_to_list(b)] for f, b in t.samples],
    }


def tracklet_from_dict(d: dict) -> Tracklet:
    return Tracklet(
        id=int(d["id"]),
        camera_id=d["camera_id"],
        samples=[(int(f), bbox_from_list(b)) for f, b in d["samples"]],
        source=d["source"],
    )


def trajectory_to_dict(t: MetricTrajectory) -> dict:
    return {
        "ped_id": t.ped_id,
        "source_tracklets": [[c, i] for c, i in t.source_tracklets],
        "samples": [list(s) for s in t.samples],
    }


def trajectory_from_dict(d: dict) -> MetricTrajectory:
    return MetricTrajectory(
        ped_id=int(d["ped_id"]),
        samples=[(float(s[0]), float(s[1]), float(s[2]), float(s[3])) for s in d["samples"]],
        source_tracklets=[(c, int(i)) for c, i in d["source_tracklets"]],
    )


def camera_to_dict(c: CameraModel) -> dict:
    return {
        "camera_id": c.camera_id,
        "fx": c.fx,
        "fy": c.fy,
        "cx": c.cx,
        "cy": c.cy,
        "k1": c.k1,
        "k2": c.k2,
        "R": [float(v) for v in c.R.reshape(-1)],
        "t": [float(v) for v in c.t],
    }


def camera_from_dict(d: dict) -> CameraModel:
    return CameraModel(
        camera_id=d["camera_id"],
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        k1=float(d.get("k1", 0.0)),
        k2=float(d.get("k2", 0.0)),
        R=np.asarray(d["R"], dtype=float).reshape(3, 3),
        t=np.asarray(d["t"], dtype=float),
    )


def landmark_to_dict(lm: Landmark) -> dict:
    return {
        "world": list(lm.world),
        "observations": {cid: list(uv) for cid, uv in lm.observations.items()},
    }


def landmark_from_dict(d: dict) -> Landmark:
    return Landmark(
        world=(float(d["world"][0]), float(d["world"][1]), float(d["world"][2])),
        observations={cid: (float(uv[0]), float(uv[1])) for cid, uv in d["observations"].items()},
    )


def action_to_dict(a: EditAction) -> dict:
    return {"seq": a.seq, "ts": a.ts, "kind": a.kind, "params": a.params, "inverse": a.inverse}


def action_from_dict(d: dict) -> EditAction:
    return EditAction(seq=int(d["seq"]), kind=d["kind"], params=d["params"], inverse=d["inverse"], ts=d["ts"])


def store_state(session: Session) -> dict:
    """Canonical comparable form of the mutable store (data, not the log)."""
    return {
        "tracklets": {tid: tracklet_to_dict(t) for tid, t in session.tracklets.items()},
        "trajectories": {pid: trajectory_to_dict(t) for pid, t in session.trajectories.items()},
        "next_tracklet_id": session.next_tracklet_id,
        "next_trajectory_id": session.next_trajectory_id,
    }
