"""Detection ingestion and a baseline tracking-by-detection associator.

The tracker is a deliberately simple two-stage stand-in for an external
tracker: constant-velocity prediction, greedy max-IoU matching of high-score
detections, a second pass that lets low-score detections extend (never start)
tracks, bounded coasting, and a minimum-length filter.

Interchange formats (one record per line, comma-separated):
  detections:  camera_id, frame, u_min, v_min, u_max, v_max, score
  tracklets:   tracklet_id, camera_id, frame, u_min, v_min, u_max, v_max
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FormatError, TrackError
from .model import BBox, Tracklet

VELOCITY_SMOOTHING = 0.5  # exponential smoothing factor for track velocity


@dataclass
class DetectionFrame:
    camera_id: str
    frame: int
    detections: list[tuple[BBox, float]]


@dataclass(frozen=True)
class TrackerParams:
    high_score_threshold: float = 0.6
    low_score_threshold: float = 0.1
    iou_gate: float = 0.3
    max_coast_frames: int = 30
    min_track_length: int = 5

    def __post_init__(self):
        if not (0 <= self.low_score_threshold < self.high_score_threshold <= 1):
            raise TrackError(
                f"need 0 <= low < high <= 1, got low={self.low_score_threshold}, high={self.high_score_threshold}"
            )
        if not (0 < self.iou_gate < 1):
            raise TrackError(f"iou_gate must be in (0,1), got {self.iou_gate}")
        if not (isinstance(self.max_coast_frames, int) and self.max_coast_frames > 0):
            raise TrackError(f"max_coast_frames must be a positive integer, got {self.max_coast_frames}")
        if not (isinstance(self.min_track_length, int) and self.min_track_length > 0):
            raise TrackError(f"min_track_length must be a positive integer, got {self.min_track_length}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a.u_max - a.u_min) * (a.v_max - a.v_min)
    area_b = (b.u_max - b.u_min) * (b.v_max - b.v_min)
    return inter / (area_a + area_b - inter)


@dataclass
class _Track:
    samples: list[tuple[int, BBox]]
    last_frame: int
    velocity: tuple[float, float] = (0.0, 0.0)
    closed: bool = False

    def predict(self, frame: int) -> BBox:
        box = self.samples[-1][1]
        du = self.velocity[0] * (frame - self.last_frame)
        dv = self.velocity[1] * (frame - self.last_frame)
        return BBox(box.u_min + du, box.v_min + dv, box.u_max + du, box.v_max + dv)

    def extend(self, frame: int, box: BBox):
        prev_frame, prev_box = self.samples[-1]
        dt = frame - prev_frame
        cu, cv = box.center()
        pu, pv = prev_box.center()
        observed = ((cu - pu) / dt, (cv - pv) / dt)
        a = VELOCITY_SMOOTHING
        self.velocity = (
            a * observed[0] + (1 - a) * self.velocity[0],
            a * observed[1] + (1 - a) * self.velocity[1],
        )
        self.samples.append((frame, box))
        self.last_frame = frame


def _greedy_match(tracks: list[int], dets: list[int], scores: dict[tuple[int, int], float], gate: float):
    """Greedy max-IoU assignment; ties broken by lower det, then track index."""
    order = sorted(scores, key=lambda k: (-scores[k], k[1], k[0]))
    used_t: set[int] = set()
    used_d: set[int] = set()
    pairs = []
    for ti, di in order:
        if scores[ti, di] <= gate:
            break
        if ti in used_t or di in used_d:
            continue
        pairs.append((ti, di))
        used_t.add(ti)
        used_d.add(di)
    return pairs, used_t, used_d


def track_detections(frames: list[DetectionFrame], params: TrackerParams | None = None) -> list[Tracklet]:
    """Associate per-frame detections of one camera into tracklets.

    Deterministic: ties go to the lower detection index, track ids follow
    creation order. Tracklets shorter than ``min_track_length`` are dropped.
    """
    params = params or TrackerParams()
    if not frames:
        return []
    camera_id = frames[0].camera_id
    last = None
    for df in frames:
        if df.camera_id != camera_id:
            raise TrackError(f"mixed camera ids: {camera_id!r} and {df.camera_id!r}")
        if last is not None and df.frame <= last:
            raise TrackError(f"detection frames not strictly increasing at frame {df.frame}")
        last = df.frame

    tracks: list[_Track] = []  # creation order; indexes are track identity
    for df in frames:
        for tr in tracks:
            if not tr.closed and df.frame - tr.last_frame - 1 > params.max_coast_frames:
                tr.closed = True
        active = [i for i, tr in enumerate(tracks) if not tr.closed]
        high = [i for i, (box, s) in enumerate(df.detections) if s >= params.high_score_threshold]
        low = [
            i
            for i, (box, s) in enumerate(df.detections)
            if params.low_score_threshold <= s < params.high_score_threshold
        ]

        scores = {
            (ti, di): iou(tracks[ti].predict(df.frame), df.detections[di][0])
            for ti in active
            for di in high
        }
        pairs, used_t, used_d = _greedy_match(active, high, scores, params.iou_gate)

        remaining = [ti for ti in active if ti not in used_t]
        scores_low = {
            (ti, di): iou(tracks[ti].predict(df.frame), df.detections[di][0])
            for ti in remaining
            for di in low
        }
        pairs_low, _, _ = _greedy_match(remaining, low, scores_low, params.iou_gate)

        for ti, di in pairs + pairs_low:
            tracks[ti].extend(df.frame, df.detections[di][0])
        # unmatched high-score detections start tracks; low-score never do
        for di in high:
            if di not in used_d:
                box = df.detections[di][0]
                tracks.append(_Track(samples=[(df.frame, box)], last_frame=df.frame))

    out = []
    next_id = 1
    for tr in tracks:
        if len(tr.samples) >= params.min_track_length:
            out.append(Tracklet(id=next_id, camera_id=camera_id, samples=tr.samples, source="auto"))
            next_id += 1
    return out


# ---------------------------------------------------------------------------
# interchange files


def _fields(line: str, n: int, lineno: int, path: str) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != n:
        raise FormatError(f"{path}:{lineno}: expected {n} fields, got {len(parts)}")
    return parts


def _parse_float(s: str, lineno: int, path: str, what: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: bad {what} {s!r}") from None


def _parse_int(s: str, lineno: int, path: str, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: bad {what} {s!r}") from None


def read_detections(path: str, camera_id: str | None = None) -> dict[str, list[DetectionFrame]]:
    """Parse a detection interchange file into per-camera frame sequences."""
    per_cam: dict[str, dict[int, list[tuple[BBox, float]]]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cam, frame_s, *rest = _fields(line, 7, lineno, path)
            if camera_id is not None and cam != camera_id:
                continue
            frame = _parse_int(frame_s, lineno, path, "frame")
            vals = [_parse_float(s, lineno, path, "coordinate") for s in rest[:4]]
            score = _parse_float(rest[4], lineno, path, "score")
            box = BBox(*vals)
            if not box.valid():
                raise FormatError(f"{path}:{lineno}: invalid box {vals}")
            if not (0 <= score <= 1):
                raise FormatError(f"{path}:{lineno}: score {score} outside [0,1]")
            per_cam.setdefault(cam, {}).setdefault(frame, []).append((box, score))
    return {
        cam: [DetectionFrame(cam, f, dets) for f, dets in sorted(frames.items())]
        for cam, frames in sorted(per_cam.items())
    }


def write_detections(frames: list[DetectionFrame], path: str) -> None:
    with open(path, "w") as fh:
        for df in frames:
            for box, score in df.detections:
                fh.write(
                    f"{df.camera_id},{df.frame},{box.u_min!r},{box.v_min!r},"
                    f"{box.u_max!r},{box.v_max!r},{score!r}\n"
                )


def import_tracklets(path: str, camera_id: str | None = None) -> list[Tracklet]:
    """Read the tracklet interchange format; ``camera_id`` filters when given.

    Tracklets are returned with the ids used in the file, ``source=auto``,
    frames sorted. Malformed lines and invariant violations are rejected with
    the offending location.
    """
    rows: dict[int, dict] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            tid_s, cam, frame_s, *coords = _fields(line, 7, lineno, path)
            tid = _parse_int(tid_s, lineno, path, "tracklet id")
            if camera_id is not None and cam != camera_id:
                continue
            frame = _parse_int(frame_s, lineno, path, "frame")
            vals = [_parse_float(s, lineno, path, "coordinate") for s in coords]
            box = BBox(*vals)
            if not box.valid():
                raise FormatError(f"{path}:{lineno}: invalid box for tracklet {tid}")
            entry = rows.setdefault(tid, {"camera": cam, "samples": {}})
            if entry["camera"] != cam:
                raise FormatError(f"{path}:{lineno}: tracklet {tid} spans cameras {entry['camera']!r} and {cam!r}")
            if frame in entry["samples"]:
                raise FormatError(f"{path}:{lineno}: tracklet {tid} has duplicate frame {frame}")
            entry["samples"][frame] = box
    out = []
    for tid in sorted(rows):
        entry = rows[tid]
        samples = sorted(entry["samples"].items())
        out.append(Tracklet(id=tid, camera_id=entry["camera"], samples=samples, source="auto"))
    return out


def export_tracklets(tracklets: list[Tracklet], path: str) -> None:
    with open(path, "w") as fh:
        for t in sorted(tracklets, key=lambda t: t.id):
            for frame, box in t.samples:
                fh.write(
                    f"{t.id},{t.camera_id},{frame},{box.u_min!r},{box.v_min!r},"
                    f"{box.u_max!r},{box.v_max!r}\n"
                )
