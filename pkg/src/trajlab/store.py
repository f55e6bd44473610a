"""Session persistence: one inspectable directory per session.

Layout::

    manifest.json            schema version, ids, frequencies, file paths
    cameras/<camera_id>.json fx, fy, cx, cy, k1, k2, R (9 row-major), t (3)
    landmarks.json           world xyz + per-camera uv observations
    store/tracklets.json     pre-correction tracklets + id counter
    store/trajectories.json  pre-correction trajectories + id counter
    actions.jsonl            applied corrections: seq, ts, kind, params
    undone.jsonl             redo stack, same record shape

The store files hold the *baseline* (pre-correction) data; loading replays
``actions.jsonl`` on top, so the log file is the single source of truth for
corrections and a load is itself the replay audit. Mutation journaling
(append + fsync before acknowledge) makes the directory crash-consistent.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import StoreError
from .model import (
    ActionLog,
    EditAction,
    Session,
    action_from_dict,
    action_to_dict,
    camera_from_dict,
    camera_to_dict,
    landmark_from_dict,
    landmark_to_dict,
    snapshot,
    tracklet_from_dict,
    tracklet_to_dict,
    trajectory_from_dict,
    trajectory_to_dict,
    validate,
)

SCHEMA_VERSION = "1"


def _write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1) + "\n")
    os.replace(tmp, path)


def _read_json(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise StoreError(f"missing file {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise StoreError(f"{path}: invalid or truncated ({e})") from None


def _log_record(action: EditAction) -> str:
    d = action_to_dict(action)
    return json.dumps({"seq": d["seq"], "ts": d["ts"], "kind": d["kind"], "params": d["params"]})


def _read_log(path: Path) -> list[EditAction]:
    """Read a journal; a partial final line (crash tail) is dropped."""
    if not path.exists():
        return []
    text = path.read_text()
    if not text:
        return []
    lines = text.split("\n")
    trailing_newline = text.endswith("\n")
    if trailing_newline:
        lines = lines[:-1]
    records = []
    for i, line in enumerate(lines):
        try:
            d = json.loads(line)
            records.append(EditAction(seq=int(d["seq"]), kind=d["kind"], params=d["params"], inverse={}, ts=d["ts"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            if i == len(lines) - 1 and not trailing_newline:
                break  # interrupted append; the mutation was never acknowledged
            raise StoreError(f"{path}:{i + 1}: corrupt log record ({e})") from None
    return records


def _write_log(path: Path, actions: list[EditAction]) -> None:
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        for action in actions:
            fh.write(_log_record(action) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def append_log(path: Path, action: EditAction) -> None:
    """Durable journal append: flushed and fsynced before returning."""
    with open(path, "a") as fh:
        fh.write(_log_record(action) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _baseline(session: Session) -> Session:
    """The pre-correction store, recovered by undoing every applied action."""
    from .editops import undo

    base = snapshot(session)
    while base.action_log.applied:
        undo(base)
    return base


def save_session(session: Session, path: str | os.PathLike) -> None:
    """Write the session directory; refuses to persist an invalid session."""
    violations = validate(session)
    if violations:
        raise StoreError("refusing to save an invalid session: " + "; ".join(violations))
    root = Path(path)
    (root / "cameras").mkdir(parents=True, exist_ok=True)
    (root / "store").mkdir(exist_ok=True)

    base = _baseline(session)
    for cam in session.cameras:
        d = camera_to_dict(cam)
        del d["camera_id"]  # the filename carries the id
        _write_json(root / "cameras" / f"{cam.camera_id}.json", d)
    _write_json(root / "landmarks.json", [landmark_to_dict(lm) for lm in session.landmarks])
    _write_json(
        root / "store" / "tracklets.json",
        {
            "next_tracklet_id": base.next_tracklet_id,
            "tracklets": [tracklet_to_dict(t) for _, t in sorted(base.tracklets.items())],
        },
    )
    _write_json(
        root / "store" / "trajectories.json",
        {
            "next_trajectory_id": base.next_trajectory_id,
            "trajectories": [trajectory_to_dict(t) for _, t in sorted(base.trajectories.items())],
        },
    )
    _write_log(root / "actions.jsonl", session.action_log.applied)
    _write_log(root / "undone.jsonl", session.action_log.undone)
    _write_json(
        root / "manifest.json",
        {
            "schema_version": SCHEMA_VERSION,
            "session_id": session.session_id,
            "label_frequency": session.label_frequency,
            "camera_fps": session.camera_fps,
            "camera_ids": session.camera_ids(),
            "reference_camera": session.reference_camera,
            "sync_offsets": session.sync_offsets,
            "calibration": session.calibration,
            "files": {
                "cameras": "cameras/<camera_id>.json",
                "landmarks": "landmarks.json",
                "tracklets": "store/tracklets.json",
                "trajectories": "store/trajectories.json",
                "actions": "actions.jsonl",
                "undone": "undone.jsonl",
            },
        },
    )


def load_session(path: str | os.PathLike) -> Session:
    """Load a session directory and replay its correction log."""
    from .editops import replay

    root = Path(path)
    manifest = _read_json(root / "manifest.json")
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise StoreError(f"schema version {version!r} not supported (expected {SCHEMA_VERSION!r})")

    cameras = []
    for camera_id in manifest["camera_ids"]:
        d = _read_json(root / "cameras" / f"{camera_id}.json")
        d["camera_id"] = camera_id
        cameras.append(camera_from_dict(d))
    landmarks = [landmark_from_dict(d) for d in _read_json(root / "landmarks.json")]
    tr = _read_json(root / "store" / "tracklets.json")
    tj = _read_json(root / "store" / "trajectories.json")

    try:
        session = Session(
            session_id=manifest["session_id"],
            label_frequency=float(manifest["label_frequency"]),
            camera_fps=float(manifest["camera_fps"]),
            cameras=cameras,
            reference_camera=manifest["reference_camera"],
            sync_offsets={cid: int(off) for cid, off in manifest["sync_offsets"].items()},
            tracklets={t["id"]: tracklet_from_dict(t) for t in tr["tracklets"]},
            trajectories={t["ped_id"]: trajectory_from_dict(t) for t in tj["trajectories"]},
            landmarks=landmarks,
            calibration=manifest.get("calibration", {}),
            next_tracklet_id=int(tr["next_tracklet_id"]),
            next_trajectory_id=int(tj["next_trajectory_id"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise StoreError(f"{root}: malformed session data ({e})") from None

    records = _read_log(root / "actions.jsonl")
    replayed = replay(session, records)
    replayed.action_log.undone = _read_log(root / "undone.jsonl")

    violations = validate(replayed)
    if violations:
        raise StoreError(f"{root}: loaded session is invalid: " + "; ".join(violations))
    return replayed


# ---------------------------------------------------------------------------
# incremental journaling used by the service between saves


def journal_apply(root: Path, session: Session, had_undone: bool) -> None:
    """Persist a fresh action: append it; drop the now-cleared redo stack."""
    append_log(root / "actions.jsonl", session.action_log.applied[-1])
    if had_undone:
        _write_log(root / "undone.jsonl", [])


def journal_undo(root: Path, session: Session) -> None:
    _write_log(root / "actions.jsonl", session.action_log.applied)
    append_log(root / "undone.jsonl", session.action_log.undone[-1])


def journal_redo(root: Path, session: Session) -> None:
    append_log(root / "actions.jsonl", session.action_log.applied[-1])
    _write_log(root / "undone.jsonl", session.action_log.undone)
