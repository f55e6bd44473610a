"""Pixel-to-metric lifting: score cross-camera tracklet pairs by triangulation
quality, associate them greedily under mutual exclusion, attach extra views,
and resample the triangulated paths onto the label grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LiftError
from .model import MetricTrajectory, Session, Tracklet
from .geometry import project_many, triangulate_many

DEFAULT_TAU_PX = 10.0
DEFAULT_MIN_OVERLAP = 10


@dataclass(frozen=True)
class LiftCandidate:
    """A triangulated path on the shared timeline, before grid resampling."""

    tracklet_ids: tuple[int, ...]
    frames: np.ndarray  # (T,) timeline frame indices with a solved point
    points: np.ndarray  # (T, 3) world meters
    frame_rms: np.ndarray  # (T,) per-frame RMS reprojection error, px
    mean_error: float


@dataclass(frozen=True)
class Match:
    tracklet_ids: tuple[int, ...]
    error: float


@dataclass
class AssociationResult:
    matches: list[Match] = field(default_factory=list)
    unmatched: list[int] = field(default_factory=list)


def _timeline(session: Session, tracklet: Tracklet) -> dict[int, tuple[float, float]]:
    """Map timeline frame -> anchor pixel for one tracklet."""
    offset = session.sync_offsets.get(tracklet.camera_id)
    if offset is None:
        raise LiftError(f"camera {tracklet.camera_id!r} has no sync offset")
    return {frame - offset: box.anchor() for frame, box in tracklet.samples}


def lift_group(session: Session, tracklet_ids: list[int], min_overlap: int = DEFAULT_MIN_OVERLAP) -> LiftCandidate:
    """Triangulate the anchors of 2+ tracklets frame-by-frame.

    Frames where at least two views are present contribute; frames whose
    solution is degenerate or behind a camera are dropped. Raises when the
    usable overlap is shorter than ``min_overlap`` or nothing survives.
    """
    tracklets = [session.tracklets.get(tid) for tid in tracklet_ids]
    for tid, t in zip(tracklet_ids, tracklets):
        if t is None:
            raise LiftError(f"unknown tracklet id {tid}")
    cam_ids = [t.camera_id for t in tracklets]
    if len(set(cam_ids)) != len(cam_ids):
        raise LiftError(f"tracklets {tracklet_ids} are not from distinct cameras")
    cameras = [session.camera(cid) for cid in cam_ids]
    anchors = [_timeline(session, t) for t in tracklets]

    counts: dict[int, int] = {}
    for a in anchors:
        for g in a:
            counts[g] = counts.get(g, 0) + 1
    frames = np.array(sorted(g for g, n in counts.items() if n >= 2), dtype=int)
    if len(frames) < min_overlap:
        raise LiftError(
            f"tracklets {tracklet_ids} share only {len(frames)} timeline frames (need {min_overlap})"
        )

    T, C = len(frames), len(cameras)
    pixels = np.zeros((T, C, 2))
    mask = np.zeros((T, C), dtype=bool)
    for c, a in enumerate(anchors):
        for i, g in enumerate(frames):
            uv = a.get(int(g))
            if uv is not None:
                pixels[i, c] = uv
                mask[i, c] = True

    points, rms, ok = triangulate_many(cameras, pixels, mask)
    if not np.any(ok):
        raise LiftError(f"all {T} overlapping frames are degenerate for tracklets {tracklet_ids}")
    return LiftCandidate(
        tracklet_ids=tuple(tracklet_ids),
        frames=frames[ok],
        points=points[ok],
        frame_rms=rms[ok],
        mean_error=float(np.mean(rms[ok])),
    )


def lift_pair(
    session: Session, id_a: int, id_b: int, min_overlap: int = DEFAULT_MIN_OVERLAP
) -> LiftCandidate:
    """Triangulate one cross-camera tracklet pair (the association score)."""
    return lift_group(session, [id_a, id_b], min_overlap)


def _attach_score(
    session: Session, candidate: LiftCandidate, tracklet: Tracklet, min_overlap: int
) -> float | None:
    """Mean pixel error of a tracklet's anchors against a lifted path."""
    anchors = _timeline(session, tracklet)
    shared = [i for i, g in enumerate(candidate.frames) if int(g) in anchors]
    if len(shared) < min_overlap:
        return None
    camera = session.camera(tracklet.camera_id)
    uv, z = project_many(camera, candidate.points[shared])
    obs = np.array([anchors[int(candidate.frames[i])] for i in shared])
    if np.any(z <= 0):
        return None
    return float(np.mean(np.linalg.norm(uv - obs, axis=1)))


def associate_cross_view(
    session: Session, tau: float = DEFAULT_TAU_PX, min_overlap: int = DEFAULT_MIN_OVERLAP
) -> AssociationResult:
    """Pick the lowest-error cross-camera pairing under mutual exclusion.

    All admissible cross-camera pairs are scored with :func:`lift_pair`;
    pairs are accepted greedily in increasing error order while the error is
    at most ``tau``. Each accepted match then tries to attach one tracklet
    from every remaining camera, keeping the attachment only when the
    re-triangulated error stays within ``tau``.
    """
    by_camera: dict[str, list[int]] = {}
    for tid in sorted(session.tracklets):
        by_camera.setdefault(session.tracklets[tid].camera_id, []).append(tid)
    if len(by_camera) < 2:
        raise LiftError(f"cross-view association needs tracklets from >= 2 cameras, got {len(by_camera)}")
    for cid in by_camera:
        if cid not in session.calibration:
            raise LiftError(f"camera {cid!r} has no calibration")
        if cid not in session.sync_offsets:
            raise LiftError(f"camera {cid!r} has no sync offset")

    cam_order = [c.camera_id for c in session.cameras if c.camera_id in by_camera]
    scored = []
    for i, cam_a in enumerate(cam_order):
        for cam_b in cam_order[i + 1 :]:
            for ta in by_camera[cam_a]:
                for tb in by_camera[cam_b]:
                    try:
                        cand = lift_pair(session, ta, tb, min_overlap)
                    except LiftError:
                        continue
                    scored.append((cand.mean_error, ta, tb, cand))
    scored.sort(key=lambda s: (s[0], s[1], s[2]))

    used: set[int] = set()
    accepted: list[LiftCandidate] = []
    for err, ta, tb, cand in scored:
        if err > tau:
            break
        if ta in used or tb in used:
            continue
        used.update((ta, tb))
        accepted.append(cand)

    result = AssociationResult()
    for cand in accepted:
        have = {session.tracklets[tid].camera_id for tid in cand.tracklet_ids}
        for cam in cam_order:
            if cam in have:
                continue
            best: tuple[float, int] | None = None
            for tid in by_camera[cam]:
                if tid in used:
                    continue
                score = _attach_score(session, cand, session.tracklets[tid], min_overlap)
                if score is not None and score <= tau and (best is None or (score, tid) < best):
                    best = (score, tid)
            if best is None:
                continue
            try:
                widened = lift_group(session, list(cand.tracklet_ids) + [best[1]], min_overlap)
            except LiftError:
                continue
            if widened.mean_error <= tau:
                cand = widened
                used.add(best[1])
                have.add(cam)
        result.matches.append(Match(tracklet_ids=cand.tracklet_ids, error=cand.mean_error))
    result.unmatched = [tid for tid in sorted(session.tracklets) if tid not in used]
    return result


def lift_session(
    session: Session, association: AssociationResult, min_overlap: int = DEFAULT_MIN_OVERLAP
) -> list[int]:
    """Turn matches into label-grid trajectories; returns the new ped ids.

    Each match is re-triangulated, converted from timeline frames to seconds,
    and linearly interpolated onto the ``1/label_frequency`` grid covering
    its span. Refuses to run once corrections exist, because the correction
    log replays against the pre-correction store.
    """
    if session.action_log.applied or session.action_log.undone:
        raise LiftError("session already has corrections; lifting must precede labeling")
    f = session.label_frequency
    fps = session.camera_fps
    minted = []
    for match in association.matches:
        cand = lift_group(session, list(match.tracklet_ids), min_overlap)
        times = cand.frames / fps
        k_first = math.ceil(times[0] * f - 1e-9)
        k_last = math.floor(times[-1] * f + 1e-9)
        ks = np.arange(k_first, k_last + 1)
        grid_times = ks / f
        samples = list(
            zip(
                grid_times,
                np.interp(grid_times, times, cand.points[:, 0]),
                np.interp(grid_times, times, cand.points[:, 1]),
                np.interp(grid_times, times, cand.points[:, 2]),
            )
        )
        if not samples:
            continue
        pid = session.mint_trajectory_id()
        session.trajectories[pid] = MetricTrajectory(
            ped_id=pid,
            samples=[(float(t), float(x), float(y), float(z)) for t, x, y, z in samples],
            source_tracklets=[(session.tracklets[tid].camera_id, tid) for tid in cand.tracklet_ids],
        )
        minted.append(pid)
    return minted
