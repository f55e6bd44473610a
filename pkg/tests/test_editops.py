"""Correction operations: semantics, inverses, undo/redo, and replay."""

import numpy as np
import pytest

import synth
from trajlab import editops as eo
from trajlab.errors import EditError
from trajlab.model import BBox, MetricTrajectory, Tracklet, snapshot, store_state


def session_with_tracklet(frames=range(1, 11), camera="cam1"):
    session = synth.plaza_session(2)
    samples = [(f, BBox(10.0 * f, 0.0, 10.0 * f + 20.0, 40.0)) for f in frames]
    tid = session.add_tracklet(Tracklet(0, camera, samples, "auto"))
    return session, tid


def session_with_trajectory(ks=range(0, 20), f=10.0):
    session = synth.plaza_session(2)
    pid = session.mint_trajectory_id()
    session.trajectories[pid] = MetricTrajectory(
        pid, [(k / f, 1.0 + 0.1 * k, 2.0, 0.0) for k in ks], ()
    )
    return session, pid


# --- Break -------------------------------------------------------------------


def test_break_hand_case():
    session, tid = session_with_tracklet(range(1, 11))
    result = eo.apply_action(session, "Break", {"target": "tracklet", "id": tid, "frame": 6})
    assert result.retired == [tid]
    left, right = result.created
    assert session.tracklets[left].frames() == [1, 2, 3, 4, 5]
    assert session.tracklets[right].frames() == [6, 7, 8, 9, 10]
    assert tid not in session.tracklets


def test_break_at_boundary_rejected():
    session, tid = session_with_tracklet(range(1, 11))
    with pytest.raises(EditError):
        eo.break_trajectory(session, tid, 1)  # empty left side
    with pytest.raises(EditError):
        eo.break_trajectory(session, tid, 11)  # empty right side


def test_break_trajectory_uses_grid_indices():
    session, pid = session_with_trajectory(range(0, 20))
    left, right = eo.break_trajectory(session, pid, 10, target="trajectory")
    assert [round(s[0] * 10) for s in session.trajectories[left].samples] == list(range(0, 10))
    assert [round(s[0] * 10) for s in session.trajectories[right].samples] == list(range(10, 20))


def test_break_unknown_id():
    session, _ = session_with_tracklet()
    with pytest.raises(EditError, match="99"):
        eo.break_trajectory(session, 99, 5)


# --- Join --------------------------------------------------------------------


def test_join_merges_disjoint_tracklets():
    session, a = session_with_tracklet(range(1, 6))
    b = session.add_tracklet(Tracklet(0, "cam1", [(f, BBox(0, 0, 5, 5)) for f in range(8, 12)], "auto"))
    joined = eo.join_trajectories(session, a, b)
    assert session.tracklets[joined].frames() == [1, 2, 3, 4, 5, 8, 9, 10, 11]
    assert a not in session.tracklets and b not in session.tracklets


def test_join_requires_same_camera():
    session, a = session_with_tracklet(range(1, 6), camera="cam1")
    b = session.add_tracklet(Tracklet(0, "cam2", [(f, BBox(0, 0, 5, 5)) for f in range(8, 12)], "auto"))
    with pytest.raises(EditError, match="camera"):
        eo.join_trajectories(session, a, b)


def test_join_rejects_overlap():
    session, a = session_with_tracklet(range(1, 6))
    b = session.add_tracklet(Tracklet(0, "cam1", [(f, BBox(0, 0, 5, 5)) for f in range(5, 9)], "auto"))
    with pytest.raises(EditError, match="overlap"):
        eo.join_trajectories(session, a, b)


def test_join_rejects_self():
    session, a = session_with_tracklet()
    with pytest.raises(EditError):
        eo.join_trajectories(session, a, a)


def test_join_mixes_sources():
    session, a = session_with_tracklet(range(1, 6))
    b = session.add_tracklet(Tracklet(0, "cam1", [(f, BBox(0, 0, 5, 5)) for f in range(8, 12)], "manual"))
    joined = eo.join_trajectories(session, a, b)
    assert session.tracklets[joined].source == "mixed"


def test_join_trajectories_merges_source_tracklets():
    session, a = session_with_trajectory(range(0, 10))
    session.trajectories[a] = MetricTrajectory(
        a, session.trajectories[a].samples, [("cam1", 1)]
    )
    b = session.mint_trajectory_id()
    session.trajectories[b] = MetricTrajectory(
        b, [(k / 10.0, 5.0, 5.0, 0.0) for k in range(12, 20)], [("cam2", 3), ("cam1", 1)]
    )
    joined = eo.join_trajectories(session, a, b, target="trajectory")
    assert list(session.trajectories[joined].source_tracklets) == [("cam1", 1), ("cam2", 3)]


# --- Delete / Disentangle / Relabel / AddMissing -------------------------------


def test_delete_removes_entity():
    session, tid = session_with_tracklet()
    eo.delete_trajectory(session, tid)
    assert session.tracklets == {}


def test_disentangle_swaps_tails():
    session, a = session_with_tracklet(range(1, 11))
    b = session.add_tracklet(
        Tracklet(0, "cam1", [(f, BBox(500.0 + f, 0, 600.0 + f, 50)) for f in range(1, 11)], "auto")
    )
    before_a = list(session.tracklets[a].samples)
    before_b = list(session.tracklets[b].samples)
    eo.disentangle(session, a, b, 6)
    after_a = session.tracklets[a].samples
    after_b = session.tracklets[b].samples
    assert after_a == before_a[:5] + before_b[5:]
    assert after_b == before_b[:5] + before_a[5:]


def test_disentangle_twice_is_identity():
    session, a = session_with_tracklet(range(1, 11))
    b = session.add_tracklet(
        Tracklet(0, "cam1", [(f, BBox(500.0 + f, 0, 600.0 + f, 50)) for f in range(3, 14)], "auto")
    )
    before = store_state(session)
    eo.disentangle(session, a, b, 6)
    eo.disentangle(session, a, b, 6)
    assert store_state(session) == before


def test_disentangle_needs_samples_on_both_tails():
    session, a = session_with_tracklet(range(1, 6))
    b = session.add_tracklet(Tracklet(0, "cam1", [(f, BBox(0, 0, 5, 5)) for f in range(8, 12)], "auto"))
    with pytest.raises(EditError):
        eo.disentangle(session, a, b, 7)  # a has no samples at/after 7


def test_relabel_replaces_range():
    session, tid = session_with_tracklet(range(1, 11))
    replacement = [[f, [1.0 * f, 2.0, 1.0 * f + 30.0, 80.0]] for f in (4, 5, 6)]
    eo.relabel(session, tid, (4, 6), replacement)
    t = session.tracklets[tid]
    assert t.frames() == list(range(1, 11))
    assert t.samples[3][1] == BBox(4.0, 2.0, 34.0, 80.0)
    assert t.source == "mixed"


def test_relabel_can_change_sample_count_in_range():
    session, tid = session_with_tracklet(range(1, 11))
    eo.relabel(session, tid, (4, 6), [[5, [1.0, 2.0, 31.0, 80.0]]])
    assert session.tracklets[tid].frames() == [1, 2, 3, 5, 7, 8, 9, 10]


def test_relabel_rejects_samples_outside_range():
    session, tid = session_with_tracklet(range(1, 11))
    with pytest.raises(EditError):
        eo.relabel(session, tid, (4, 6), [[8, [0.0, 0.0, 5.0, 5.0]]])


def test_relabel_rejects_emptying_whole_tracklet():
    session, tid = session_with_tracklet(range(1, 4))
    with pytest.raises(EditError):
        eo.relabel(session, tid, (1, 3), [])


def test_add_missing_tracklet():
    session, _ = session_with_tracklet()
    result = eo.apply_action(
        session,
        "AddMissing",
        {"target": "tracklet", "camera_id": "cam2", "samples": [[f, [0.0, 0.0, 5.0, 5.0]] for f in range(5)]},
    )
    tid = result.created[0]
    t = session.tracklets[tid]
    assert t.camera_id == "cam2" and t.source == "manual"
    assert t.frames() == list(range(5))


def test_add_missing_trajectory_on_grid():
    session, _ = session_with_trajectory()
    result = eo.apply_action(
        session,
        "AddMissing",
        {"target": "trajectory", "samples": [[0.5, 1.0, 2.0, 0.0], [0.6, 1.1, 2.0, 0.0]]},
    )
    pid = result.created[0]
    assert session.trajectories[pid].times() == [0.5, 0.6]
    with pytest.raises(EditError):
        eo.apply_action(
            session, "AddMissing", {"target": "trajectory", "samples": [[0.503, 1.0, 2.0, 0.0]]}
        )


def test_add_missing_unknown_camera():
    session, _ = session_with_tracklet()
    with pytest.raises(EditError, match="ghost"):
        eo.apply_action(
            session, "AddMissing", {"target": "tracklet", "camera_id": "ghost", "samples": [[0, [0, 0, 5, 5]]]}
        )


# --- parameter validation -------------------------------------------------------


def test_unknown_kind_and_target():
    session, tid = session_with_tracklet()
    with pytest.raises(EditError):
        eo.apply_action(session, "Explode", {"target": "tracklet", "id": tid})
    with pytest.raises(EditError):
        eo.apply_action(session, "Break", {"target": "thing", "id": tid, "frame": 5})


def test_non_integer_params_rejected():
    session, tid = session_with_tracklet()
    with pytest.raises(EditError):
        eo.apply_action(session, "Break", {"target": "tracklet", "id": tid, "frame": 5.5})
    with pytest.raises(EditError):
        eo.apply_action(session, "Break", {"target": "tracklet", "id": True, "frame": 5})


# --- undo / redo ------------------------------------------------------------------


def test_undo_restores_exact_state():
    session, tid = session_with_tracklet()
    before = store_state(session)
    eo.break_trajectory(session, tid, 6)
    eo.undo(session)
    assert store_state(session) == before
    assert len(session.action_log.undone) == 1
    assert session.action_log.applied == []


def test_undo_empty_log():
    session, _ = session_with_tracklet()
    with pytest.raises(EditError, match="undo"):
        eo.undo(session)


def test_redo_reapplies_with_same_ids():
    session, tid = session_with_tracklet()
    result = eo.apply_action(session, "Break", {"target": "tracklet", "id": tid, "frame": 6})
    after_apply = store_state(session)
    eo.undo(session)
    redo_result = eo.redo(session)
    assert store_state(session) == after_apply
    assert redo_result.created == result.created
    assert session.action_log.applied[-1].params.get("minted") == result.created


def test_redo_empty_stack():
    session, _ = session_with_tracklet()
    with pytest.raises(EditError, match="redo"):
        eo.redo(session)


def test_new_action_clears_redo_stack():
    session, tid = session_with_tracklet()
    left, right = eo.break_trajectory(session, tid, 6)
    eo.undo(session)
    assert session.action_log.undone
    eo.delete_trajectory(session, tid)
    assert session.action_log.undone == []


def test_undo_redo_ladder(rng):
    session = synth.random_store_session(rng, n_tracklets=5, n_trajectories=2)
    states = [store_state(session)]
    for _ in range(6):
        edit = synth.random_edit(rng, session)
        eo.apply_action(session, edit["kind"], edit["params"])
        states.append(store_state(session))
    for i in range(6, 0, -1):
        eo.undo(session)
        assert store_state(session) == states[i - 1]
    for i in range(1, 7):
        eo.redo(session)
        assert store_state(session) == states[i]


# --- sequencing / replay ---------------------------------------------------------


def test_seq_numbers_are_contiguous():
    session, tid = session_with_tracklet()
    left, right = eo.break_trajectory(session, tid, 6)
    eo.join_trajectories(session, left, right)
    assert [a.seq for a in session.action_log.applied] == [1, 2]


def test_join_after_break_restores_content():
    session, tid = session_with_tracklet()
    before_tk, before_tj = synth.sample_multiset(session)
    left, right = eo.break_trajectory(session, tid, 6)
    eo.join_trajectories(session, left, right)
    after_tk, after_tj = synth.sample_multiset(session)
    assert after_tk == before_tk and after_tj == before_tj


def test_replay_reproduces_live_store(rng):
    session = synth.random_store_session(rng, n_tracklets=5, n_trajectories=2)
    baseline = snapshot(session)
    for _ in range(8):
        edit = synth.random_edit(rng, session)
        if edit is None:
            break
        eo.apply_action(session, edit["kind"], edit["params"])
    replayed = eo.replay(baseline, list(session.action_log.applied))
    assert store_state(replayed) == store_state(session)
    assert [a.ts for a in replayed.action_log.applied] == [a.ts for a in session.action_log.applied]


def test_replay_rejects_gap_in_seq():
    session, tid = session_with_tracklet()
    baseline = snapshot(session)
    eo.break_trajectory(session, tid, 6)
    records = list(session.action_log.applied)
    records[0].seq = 2
    with pytest.raises(EditError, match="replay failed at seq 2"):
        eo.replay(baseline, records)


def test_replay_detects_tampered_minted_ids():
    session, tid = session_with_tracklet()
    baseline = snapshot(session)
    eo.break_trajectory(session, tid, 6)
    records = [
        eo.EditAction(seq=a.seq, kind=a.kind, params={**a.params, "minted": [77, 78]}, inverse={}, ts=a.ts)
        if a.params.get("minted")
        else a
        for a in session.action_log.applied
    ]
    with pytest.raises(EditError, match="replay failed at seq 1"):
        eo.replay(baseline, records)


def test_action_counts():
    session, tid = session_with_tracklet()
    left, right = eo.break_trajectory(session, tid, 6)
    eo.join_trajectories(session, left, right)
    counts = eo.action_counts(session)
    assert counts["Break"] == 1 and counts["Join"] == 1 and counts["Delete"] == 0


def test_conservation_over_random_sequences(rng):
    conserving = {"Break", "Join", "Disentangle"}
    for _ in range(30):
        session = synth.random_store_session(rng, n_tracklets=4, n_trajectories=2)
        for _ in range(6):
            edit = synth.random_edit(rng, session)
            if edit is None:
                break
            before = synth.sample_multiset(session)
            eo.apply_action(session, edit["kind"], edit["params"])
            after = synth.sample_multiset(session)
            if edit["kind"] in conserving:
                assert after == before, edit
