"""The label-correction algebra: six fix operations, undo/redo, replay.

Every mutation of tracklets or trajectories goes through ``apply_action``,
which appends a replayable record to the session's action log and captures
an inverse payload sufficient to undo it exactly (including the id-mint
counters, so undo restores the store field-for-field).

Operations address samples by an integer key: the camera frame index for
tracklets, and the label-grid index ``round(time * label_frequency)`` for
metric trajectories. Params are JSON-plain so the log file replays exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import EditError
from .model import (
    EDIT_KINDS,
    BBox,
    EditAction,
    MetricTrajectory,
    Session,
    Tracklet,
    bbox_from_list,
    bbox_to_list,
    grid_index,
    now_iso,
    on_grid,
    tracklet_from_dict,
    tracklet_to_dict,
    trajectory_from_dict,
    trajectory_to_dict,
)

TARGETS = ("tracklet", "trajectory")


@dataclass
class ActionResult:
    action: EditAction
    target: str
    created: list[int] = field(default_factory=list)
    retired: list[int] = field(default_factory=list)
    changed: list[int] = field(default_factory=list)


# ---------------------------------------------------------------------------
# keyed-sample adapters: one uniform view over both entity kinds


def _entity_map(session: Session, target: str) -> dict:
    if target == "tracklet":
        return session.tracklets
    if target == "trajectory":
        return session.trajectories
    raise EditError(f"unknown target {target!r}")


def _get(session: Session, target: str, id: int):
    ent = _entity_map(session, target).get(id)
    if ent is None:
        raise EditError(f"unknown {target} id {id}")
    return ent


def _keyed(session: Session, target: str, entity) -> list[tuple[int, tuple]]:
    if target == "tracklet":
        return [(frame, (frame, box)) for frame, box in entity.samples]
    f = session.label_frequency
    return [(grid_index(s[0], f), s) for s in entity.samples]


def _entity_dict(target: str, entity) -> dict:
    return tracklet_to_dict(entity) if target == "tracklet" else trajectory_to_dict(entity)


def _entity_from_dict(target: str, d: dict):
    return tracklet_from_dict(d) if target == "tracklet" else trajectory_from_dict(d)


def _rebuild(target: str, template, new_id: int, keyed: list[tuple[int, tuple]], source: str | None = None):
    """New entity with the template's identity fields and the given samples."""
    samples = [s for _, s in sorted(keyed, key=lambda ks: ks[0])]
    if target == "tracklet":
        return Tracklet(new_id, template.camera_id, samples, source or template.source)
    return MetricTrajectory(new_id, samples, list(template.source_tracklets))


def _mint(session: Session, target: str) -> int:
    return session.mint_tracklet_id() if target == "tracklet" else session.mint_trajectory_id()


def _parse_samples(session: Session, target: str, raw, what: str) -> list[tuple[int, tuple]]:
    """Validate and key raw JSON samples for Relabel/AddMissing."""
    if not isinstance(raw, list):
        raise EditError(f"{what}: samples must be a list")
    keyed = []
    if target == "tracklet":
        for item in raw:
            try:
                frame, box_vals = item
                box = bbox_from_list(box_vals)
            except (TypeError, ValueError, IndexError):
                raise EditError(f"{what}: each sample must be [frame, [u_min, v_min, u_max, v_max]]") from None
            if not isinstance(frame, int) or isinstance(frame, bool):
                raise EditError(f"{what}: frame {frame!r} is not an integer")
            if not box.valid():
                raise EditError(f"{what}: invalid box {box_vals} at frame {frame}")
            keyed.append((frame, (frame, box)))
    else:
        f = session.label_frequency
        for item in raw:
            try:
                t, x, y, z = (float(v) for v in item)
            except (TypeError, ValueError):
                raise EditError(f"{what}: each sample must be [time, x, y, z]") from None
            if not on_grid(t, f):
                raise EditError(f"{what}: time {t} is off the 1/{f} label grid")
            keyed.append((grid_index(t, f), (t, x, y, z)))
    keys = [k for k, _ in keyed]
    if len(set(keys)) != len(keys):
        raise EditError(f"{what}: duplicate sample keys")
    if keys != sorted(keys):
        raise EditError(f"{what}: samples not sorted")
    return keyed


# ---------------------------------------------------------------------------
# the six operations (pure compute; mutation handled by apply_action)


def _require_int(params: dict, name: str) -> int:
    v = params.get(name)
    if not isinstance(v, int) or isinstance(v, bool):
        raise EditError(f"{name} must be an integer, got {v!r}")
    return v


def _op_break(session: Session, target: str, params: dict):
    id = _require_int(params, "id")
    frame = _require_int(params, "frame")
    entity = _get(session, target, id)
    keyed = _keyed(session, target, entity)
    left = [ks for ks in keyed if ks[0] < frame]
    right = [ks for ks in keyed if ks[0] >= frame]
    if not left or not right:
        raise EditError(f"break at {frame} leaves an empty side of {target} {id}")
    return {"touch": [entity], "remove": [id], "make": [(entity, left, None), (entity, right, None)]}


def _op_join(session: Session, target: str, params: dict):
    id_a = _require_int(params, "id_a")
    id_b = _require_int(params, "id_b")
    if id_a == id_b:
        raise EditError(f"cannot join {target} {id_a} with itself")
    a = _get(session, target, id_a)
    b = _get(session, target, id_b)
    if target == "tracklet" and a.camera_id != b.camera_id:
        raise EditError(f"cannot join across cameras {a.camera_id!r} and {b.camera_id!r}")
    ka = _keyed(session, target, a)
    kb = _keyed(session, target, b)
    overlap = {k for k, _ in ka} & {k for k, _ in kb}
    if overlap:
        raise EditError(f"join of {target}s {id_a} and {id_b} overlaps at {sorted(overlap)[:5]}")
    source = None
    if target == "tracklet":
        source = a.source if a.source == b.source else "mixed"
    joined = _rebuild(target, a, 0, ka + kb, source)
    if target == "trajectory":
        seen = set(a.source_tracklets)
        joined.source_tracklets = list(a.source_tracklets) + [s for s in b.source_tracklets if s not in seen]
    return {"touch": [a, b], "remove": [id_a, id_b], "make_built": [joined]}


def _op_delete(session: Session, target: str, params: dict):
    id = _require_int(params, "id")
    entity = _get(session, target, id)
    return {"touch": [entity], "remove": [id], "make": []}


def _op_disentangle(session: Session, target: str, params: dict):
    id_a = _require_int(params, "id_a")
    id_b = _require_int(params, "id_b")
    frame = _require_int(params, "frame")
    if id_a == id_b:
        raise EditError(f"cannot disentangle {target} {id_a} with itself")
    a = _get(session, target, id_a)
    b = _get(session, target, id_b)
    if target == "tracklet" and a.camera_id != b.camera_id:
        raise EditError(f"cannot disentangle across cameras {a.camera_id!r} and {b.camera_id!r}")
    ka = _keyed(session, target, a)
    kb = _keyed(session, target, b)
    tail_a = [ks for ks in ka if ks[0] >= frame]
    tail_b = [ks for ks in kb if ks[0] >= frame]
    if not tail_a or not tail_b:
        empty = id_a if not tail_a else id_b
        raise EditError(f"no samples at or after {frame} in {target} {empty}")
    new_a = [ks for ks in ka if ks[0] < frame] + tail_b
    new_b = [ks for ks in kb if ks[0] < frame] + tail_a
    return {
        "touch": [a, b],
        "replace": [(id_a, _rebuild(target, a, id_a, new_a)), (id_b, _rebuild(target, b, id_b, new_b))],
    }


def _op_relabel(session: Session, target: str, params: dict):
    id = _require_int(params, "id")
    frame_range = params.get("frame_range")
    if (
        not isinstance(frame_range, list)
        or len(frame_range) != 2
        or any(not isinstance(v, int) or isinstance(v, bool) for v in frame_range)
    ):
        raise EditError(f"frame_range must be [first, last], got {frame_range!r}")
    lo, hi = frame_range
    if lo > hi:
        raise EditError(f"frame_range [{lo}, {hi}] is empty")
    entity = _get(session, target, id)
    replacement = _parse_samples(session, target, params.get("samples"), "relabel")
    outside = [k for k, _ in replacement if not lo <= k <= hi]
    if outside:
        raise EditError(f"replacement samples outside frame_range: {outside[:5]}")
    keyed = _keyed(session, target, entity)
    kept = [ks for ks in keyed if not lo <= ks[0] <= hi]
    new_keyed = kept + replacement
    if not new_keyed:
        raise EditError(f"relabel would leave {target} {id} empty")
    source = "mixed" if target == "tracklet" else None
    return {"touch": [entity], "replace": [(id, _rebuild(target, entity, id, new_keyed, source))]}


def _op_add_missing(session: Session, target: str, params: dict):
    samples = _parse_samples(session, target, params.get("samples"), "add_missing")
    if not samples:
        raise EditError("add_missing: samples must be non-empty")
    if target == "tracklet":
        camera_id = params.get("camera_id")
        if camera_id not in session.camera_ids():
            raise EditError(f"unknown camera {camera_id!r}")
        template = Tracklet(0, camera_id, [], "manual")
    else:
        template = MetricTrajectory(0, [], [])
    return {"touch": [], "remove": [], "make": [(template, samples, "manual")]}


_OPS = {
    "Break": _op_break,
    "Join": _op_join,
    "Delete": _op_delete,
    "Disentangle": _op_disentangle,
    "Relabel": _op_relabel,
    "AddMissing": _op_add_missing,
}


# ---------------------------------------------------------------------------
# apply / undo / redo / replay


def _normalize_params(params: dict) -> dict:
    try:
        flat = json.loads(json.dumps(params))
    except (TypeError, ValueError) as e:
        raise EditError(f"params are not JSON-serializable: {e}") from None
    if not isinstance(flat, dict):
        raise EditError("params must be a mapping")
    return flat


def _apply(session: Session, kind: str, params: dict, ts: str | None = None) -> ActionResult:
    """Validate, mutate, and log one action; undone stack untouched."""
    if kind not in EDIT_KINDS:
        raise EditError(f"unknown action kind {kind!r}")
    params = _normalize_params(params)
    target = params.get("target", "tracklet")
    if target not in TARGETS:
        raise EditError(f"unknown target {target!r}")
    params["target"] = target

    plan = _OPS[kind](session, target, params)
    entities = _entity_map(session, target)
    inverse = {
        "target": target,
        "restore": [_entity_dict(target, e) for e in plan.get("touch", [])],
        "remove": [],
        "next_tracklet_id": session.next_tracklet_id,
        "next_trajectory_id": session.next_trajectory_id,
    }

    result = ActionResult(action=None, target=target)  # type: ignore[arg-type]
    for id in plan.get("remove", []):
        del entities[id]
        result.retired.append(id)
    built = [
        _rebuild(target, template, 0, keyed, source) for template, keyed, source in plan.get("make", [])
    ] + plan.get("make_built", [])
    minted = []
    for entity in built:
        new_id = _mint(session, target)
        if target == "tracklet":
            entity.id = new_id
        else:
            entity.ped_id = new_id
        entities[new_id] = entity
        minted.append(new_id)
        result.created.append(new_id)
    for id, entity in plan.get("replace", []):
        entities[id] = entity
        result.changed.append(id)
    inverse["remove"] = list(minted)

    recorded = params.get("minted")
    if recorded is not None and recorded != minted:
        raise EditError(f"recorded minted ids {recorded} do not match freshly minted {minted}")
    if minted:
        params["minted"] = minted

    action = EditAction(
        seq=len(session.action_log.applied) + 1,
        kind=kind,
        params=params,
        inverse=inverse,
        ts=ts or now_iso(),
    )
    session.action_log.applied.append(action)
    result.action = action
    return result


def apply_action(session: Session, kind: str, params: dict, ts: str | None = None) -> ActionResult:
    """Apply a fresh user action; a new action always clears the redo stack."""
    result = _apply(session, kind, params, ts)
    session.action_log.undone.clear()
    return result


def _apply_inverse(session: Session, inverse: dict) -> tuple[list[int], list[int], list[int]]:
    target = inverse["target"]
    entities = _entity_map(session, target)
    retired = []
    for id in inverse["remove"]:
        del entities[id]
        retired.append(id)
    created, changed = [], []
    for d in inverse["restore"]:
        entity = _entity_from_dict(target, d)
        id = entity.id if target == "tracklet" else entity.ped_id
        (changed if id in entities else created).append(id)
        entities[id] = entity
    session.next_tracklet_id = inverse["next_tracklet_id"]
    session.next_trajectory_id = inverse["next_trajectory_id"]
    return created, retired, changed


def undo(session: Session) -> ActionResult:
    """Revert the most recent action exactly; it becomes redoable."""
    log = session.action_log
    if not log.applied:
        raise EditError("nothing to undo")
    action = log.applied.pop()
    created, retired, changed = _apply_inverse(session, action.inverse)
    action.inverse = {}
    log.undone.append(action)
    return ActionResult(action=action, target=action.params["target"], created=created, retired=retired, changed=changed)


def redo(session: Session) -> ActionResult:
    """Re-apply the most recently undone action (same ids, same record)."""
    log = session.action_log
    if not log.undone:
        raise EditError("nothing to redo")
    action = log.undone.pop()
    return _apply(session, action.kind, action.params, ts=action.ts)


def replay(initial: Session, records: list[EditAction]) -> Session:
    """Re-run a recorded log against a copy of its starting store."""
    from .model import snapshot

    session = snapshot(initial)
    session.action_log.applied.clear()
    session.action_log.undone.clear()
    for i, record in enumerate(records):
        expected = i + 1
        if record.seq != expected:
            raise EditError(f"replay failed at seq {record.seq}: expected seq {expected}")
        try:
            _apply(session, record.kind, record.params, ts=record.ts)
        except EditError as e:
            raise EditError(f"replay failed at seq {record.seq}: {e}") from None
    return session


def action_counts(session: Session) -> dict[str, int]:
    counts = {kind: 0 for kind in EDIT_KINDS}
    for action in session.action_log.applied:
        counts[action.kind] += 1
    return counts


# convenience wrappers mirroring the operation names


def break_trajectory(session: Session, id: int, frame: int, target: str = "tracklet") -> tuple[int, int]:
    r = apply_action(session, "Break", {"target": target, "id": id, "frame": frame})
    return r.created[0], r.created[1]


def join_trajectories(session: Session, id_a: int, id_b: int, target: str = "tracklet") -> int:
    r = apply_action(session, "Join", {"target": target, "id_a": id_a, "id_b": id_b})
    return r.created[0]


def delete_trajectory(session: Session, id: int, target: str = "tracklet") -> None:
    apply_action(session, "Delete", {"target": target, "id": id})


def disentangle(session: Session, id_a: int, id_b: int, frame: int, target: str = "tracklet") -> None:
    apply_action(session, "Disentangle", {"target": target, "id_a": id_a, "id_b": id_b, "frame": frame})


def relabel(session: Session, id: int, frame_range: tuple[int, int], samples: list, target: str = "tracklet") -> None:
    apply_action(
        session,
        "Relabel",
        {"target": target, "id": id, "frame_range": list(frame_range), "samples": samples},
    )


def add_missing(session: Session, camera_id: str | None, samples: list, target: str = "tracklet") -> int:
    params: dict = {"target": target, "samples": samples}
    if target == "tracklet":
        params["camera_id"] = camera_id
    r = apply_action(session, "AddMissing", params)
    return r.created[0]
