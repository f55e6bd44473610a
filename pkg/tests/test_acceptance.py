"""Release gate: six criteria, one test each, reported in the run summary.

Each test pins its tolerances inline; the conftest hook prints one PASS/FAIL
line per criterion after the run.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

import synth
from trajlab import analytics as an
from trajlab import editops as eo
from trajlab import geometry as g
from trajlab import lifting as lf
from trajlab.model import (
    BBox,
    CameraModel,
    Landmark,
    MetricTrajectory,
    Tracklet,
    snapshot,
    store_state,
)
from trajlab.service import create_app
from trajlab.store import load_session, save_session
from trajlab.tracking import track_detections

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------------------
# criterion 1: synthetic end-to-end


def run_pipeline(noise_px: float, rng: np.random.Generator):
    """Recover poses from landmarks, then project -> track -> associate -> lift."""
    session = synth.plaza_session(3, offsets={"cam1": 0, "cam2": 5, "cam3": -3})
    true_cams = {c.camera_id: c for c in synth.plaza_cameras(3)}
    landmarks = synth.plaza_landmarks(list(true_cams.values()), n=12)
    assert len(landmarks) == 12

    for cam in session.cameras:
        blank = CameraModel(
            camera_id=cam.camera_id,
            fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy, k1=cam.k1, k2=cam.k2,
        )
        result = g.calibrate_extrinsics(blank, landmarks)
        cam.R, cam.t = result.R, result.t
        session.calibration[cam.camera_id] = {
            "source": "landmarks",
            "residual_px": result.residual_px,
            "iterations": result.iterations,
        }

    offsets = session.sync_offsets
    session.sync_offsets = g.align_frames(
        {cid: 100 + off for cid, off in offsets.items()}, session.reference_camera
    )
    assert session.sync_offsets == offsets

    paths = synth.lane_walkers(10, 60.0, session.camera_fps, rng)
    for cid, cam in true_cams.items():
        frames = synth.walker_detections(cam, paths, offsets[cid], session.camera_fps, noise_px, rng)
        for t in track_detections(frames):
            t.camera_id = cid
            session.add_tracklet(t)

    association = lf.associate_cross_view(session)
    lf.lift_session(session, association)
    return session, paths


def nearest_walker_errors(session, paths):
    """Per-trajectory (walker id, per-sample error array) by nearest truth."""
    f = session.label_frequency
    out = {}
    for pid, tr in session.trajectories.items():
        best = None
        for wid, path in paths.items():
            errs = np.array(
                [
                    np.linalg.norm(np.asarray([x, y, z]) - path[round(t * f)])
                    for t, x, y, z in tr.samples
                ]
            )
            if best is None or errs.mean() < best[1].mean():
                best = (wid, errs)
        out[pid] = best
    return out


def test_synthetic_end_to_end(rng):
    started = time.monotonic()

    session, paths = run_pipeline(noise_px=0.0, rng=rng)
    assert len(session.trajectories) == 10
    matched = nearest_walker_errors(session, paths)
    assert sorted(w for w, _ in matched.values()) == sorted(paths), "one trajectory per walker"
    worst = max(float(errs.max()) for _, errs in matched.values())
    assert worst < 1e-3, f"noiseless per-sample error {worst:.2e} m"

    noisy, paths_n = run_pipeline(noise_px=1.0, rng=rng)
    assert noisy.trajectories, "noisy pipeline produced no trajectories"
    errs_n = np.concatenate([e for _, e in nearest_walker_errors(noisy, paths_n).values()])
    assert float(errs_n.mean()) < 0.10, f"noisy mean error {errs_n.mean():.3f} m"

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"end-to-end took {elapsed:.1f} s"


# ---------------------------------------------------------------------------
# criterion 2: geometry oracles


def shared_view_points(cams, rng, n):
    """World points visible (bounded field, in front) to every given camera."""
    pts = np.empty((0, 3))
    while len(pts) < n:
        cand = np.column_stack(
            [rng.uniform(2, 18, 4 * n), rng.uniform(2, 18, 4 * n), rng.uniform(0, 2, 4 * n)]
        )
        ok = np.ones(len(cand), dtype=bool)
        for cam in cams:
            pc = cand @ cam.R.T + cam.t
            with np.errstate(divide="ignore", invalid="ignore"):
                xn, yn = pc[:, 0] / pc[:, 2], pc[:, 1] / pc[:, 2]
            ok &= (pc[:, 2] > 0.5) & (np.abs(xn) <= 0.55) & (np.abs(yn) <= 0.55)
        pts = np.vstack([pts, cand[ok]])
    return pts[:n]


def ring_camera(rng, idx):
    angle = rng.uniform(0, 2 * np.pi)
    radius = rng.uniform(15, 25)
    pos = np.array([10 + radius * np.cos(angle), 10 + radius * np.sin(angle), rng.uniform(5, 9)])
    target = np.array([10, 10, 1]) + rng.uniform(-2, 2, 3) * np.array([1, 1, 0.2])
    R, t = synth.look_at_pose(pos, target)
    return CameraModel(
        f"ring{idx}",
        fx=rng.uniform(900, 1400),
        fy=rng.uniform(900, 1400),
        cx=rng.uniform(800, 1100),
        cy=rng.uniform(450, 650),
        k1=rng.uniform(-0.1, 0.05),
        k2=rng.uniform(-0.005, 0.005),
        R=R,
        t=t,
    )


def test_geometry_oracles(rng):
    # projection/triangulation round-trip: 10^4 random configurations
    total, worst = 0, 0.0
    for rig in range(20):
        n_cams = 2 + rig % 2
        cams = [ring_camera(rng, i) for i in range(n_cams)]
        pts = shared_view_points(cams, rng, 500)
        pixels = np.stack([g.project_many(c, pts)[0] for c in cams], axis=1)
        recovered, rms, ok = g.triangulate_many(cams, pixels)
        assert bool(ok.all())
        err = np.linalg.norm(recovered - pts, axis=1)
        worst = max(worst, float(err.max()))
        total += len(pts)
    assert total == 10_000
    assert worst < 1e-6, f"worst round-trip error {worst:.2e} m"

    # pose identity: recover a known camera from its own landmark projections
    for _ in range(50):
        cam = synth.random_camera(rng)
        pts = synth.points_in_view(cam, rng, 16)
        landmarks = [
            Landmark(world=tuple(p), observations={cam.camera_id: g.project(cam, p)}) for p in pts
        ]
        blank = CameraModel(
            camera_id=cam.camera_id,
            fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy, k1=cam.k1, k2=cam.k2,
        )
        result = g.calibrate_extrinsics(blank, landmarks)
        assert np.abs(result.R - cam.R).max() < 1e-8
        assert np.abs(result.t - cam.t).max() < 1e-8

    # association equals exhaustive brute force, <= 4 tracklets per camera
    checked = 0
    for seed in range(12):
        n_walkers = 2 + seed % 3  # 2..4
        session = synth.plaza_session(2)
        local = np.random.default_rng(1000 + seed)
        paths = synth.lane_walkers(n_walkers, 20.0, session.camera_fps, local)
        for cam in session.cameras:
            off = session.sync_offsets[cam.camera_id]
            per = synth.walker_tracklets(cam, paths, off, session.camera_fps, 0.5, local)
            for wid in sorted(per):
                if local.uniform() < 0.2:
                    continue  # unbalanced instances: a walker missing one view
                samples = per[wid]
                if local.uniform() < 0.25:
                    # decoy: shift far enough that no admissible partner remains
                    samples = [
                        (f, BBox(b.u_min + 200, b.v_min, b.u_max + 200, b.v_max))
                        for f, b in samples
                    ]
                session.add_tracklet(Tracklet(0, cam.camera_id, samples, "auto"))
        per_cam = {}
        for t in session.tracklets.values():
            per_cam[t.camera_id] = per_cam.get(t.camera_id, 0) + 1
        if len(per_cam) < 2:
            continue
        assert max(per_cam.values()) <= 4
        greedy = lf.associate_cross_view(session)
        greedy_pairs = {tuple(sorted(m.tracklet_ids)) for m in greedy.matches}
        brute = {
            tuple(sorted(p))
            for p in synth.brute_force_pairs(session, lf.DEFAULT_TAU_PX, lf.DEFAULT_MIN_OVERLAP)
        }
        assert greedy_pairs == brute
        checked += 1
    assert checked >= 10


# ---------------------------------------------------------------------------
# criterion 3: edit algebra


def test_edit_algebra(rng):
    bases = [
        synth.random_store_session(rng, n_tracklets=int(rng.integers(2, 7)), n_trajectories=int(rng.integers(1, 4)))
        for _ in range(8)
    ]
    conserving = {"Break", "Join", "Disentangle"}
    sequences = 0

    # 700 mixed sequences: step conservation, undo-all, redo-all, offline replay
    for i in range(700):
        session = snapshot(bases[i % len(bases)])
        pristine = snapshot(session)
        original = store_state(session)
        for _ in range(int(rng.integers(1, 9))):
            edit = synth.random_edit(rng, session)
            if edit is None:
                break
            before = synth.sample_multiset(session)
            eo.apply_action(session, edit["kind"], edit["params"])
            if edit["kind"] in conserving:
                assert synth.sample_multiset(session) == before
        after = store_state(session)
        records = list(session.action_log.applied)
        while session.action_log.applied:
            eo.undo(session)
        assert store_state(session) == original, "undo-all must restore the original store"
        while session.action_log.undone:
            eo.redo(session)
        assert store_state(session) == after, "redo-all must restore the edited store"
        assert store_state(eo.replay(pristine, records)) == after, "offline replay must match live"
        sequences += 1

    # 150 join-of-break identities
    for i in range(150):
        session = snapshot(bases[i % len(bases)])
        splittable = [t for t in session.tracklets.values() if len(t.samples) >= 2]
        t = splittable[int(rng.integers(0, len(splittable)))]
        before = synth.sample_multiset(session)
        frame = t.frames()[int(rng.integers(1, len(t.samples)))]
        left, right = eo.break_trajectory(session, t.id, frame)
        eo.join_trajectories(session, left, right)
        assert synth.sample_multiset(session) == before, "join(break(x)) must preserve content"
        sequences += 1

    # 150 disentangle-squared identities
    made = 0
    while made < 150:
        session = snapshot(bases[made % len(bases)])
        pairs = []
        for a in session.tracklets.values():
            for b in session.tracklets.values():
                if a.id >= b.id or a.camera_id != b.camera_id:
                    continue
                lo = max(a.first_frame(), b.first_frame())
                hi = min(a.last_frame(), b.last_frame())
                if lo <= hi:
                    pairs.append((a.id, b.id, lo, hi))
        if not pairs:
            bases[made % len(bases)] = synth.random_store_session(rng, 6, 2)
            continue
        a, b, lo, hi = pairs[int(rng.integers(0, len(pairs)))]
        frame = int(rng.integers(lo, hi + 1))
        original = store_state(session)
        eo.disentangle(session, a, b, frame)
        eo.disentangle(session, a, b, frame)
        assert store_state(session) == original, "disentangle twice must be the identity"
        made += 1
        sequences += 1

    assert sequences == 1000


# ---------------------------------------------------------------------------
# criterion 4: statistics oracles


def test_statistics_oracles(rng):
    f = 10.0

    # constant-velocity trajectories carry no acceleration signal
    for _ in range(10):
        traj = synth.straight_trajectory(
            1, 0.0, 80, f, float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)),
            float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)),
        )
        assert an.perception_noise([traj], 1 / f) < 1e-9

    # circular motion: measured acceleration equals r * omega^2
    t = np.arange(600) / f
    circle = MetricTrajectory(
        ped_id=1,
        samples=[(float(ti), float(2 * np.cos(0.5 * ti)), float(2 * np.sin(0.5 * ti)), 0.0) for ti in t],
    )
    noise = an.perception_noise([circle], 1 / f)
    assert abs(noise - 0.5) / 0.5 < 0.005, f"circle noise {noise:.6f} m/s^2"

    # speed of the 1.2 m/s line is (1.2, 0)
    mean, std = an.motion_speed_stats([synth.straight_trajectory(1, 0.0, 100, f, 0, 0, 1.2, 0)])
    assert abs(mean - 1.2) < 1e-9 and std < 1e-9

    # static pair at (0,0) and (3,4): min distance (5, 0)
    a = MetricTrajectory(ped_id=1, samples=[(i / f, 0.0, 0.0, 0.0) for i in range(30)])
    b = MetricTrajectory(ped_id=2, samples=[(i / f, 3.0, 4.0, 0.0) for i in range(30)])
    mean, std = an.min_distance_stats([a, b], f)
    assert abs(mean - 5.0) < 1e-12 and std < 1e-12

    # rigid-motion and time-shift invariance
    trajs = [
        synth.straight_trajectory(1, 0.0, 60, f, 0, 0, 1.1, 0.3),
        synth.straight_trajectory(2, 1.0, 80, f, 4, 0, -0.8, 0.5),
        circle,
    ]
    c, s = np.cos(0.83), np.sin(0.83)
    moved = [
        MetricTrajectory(
            ped_id=tr.ped_id,
            samples=[(ts + 5.0, c * x - s * y + 12.0, s * x + c * y - 7.0, z) for ts, x, y, z in tr.samples],
        )
        for tr in trajs
    ]
    for fn in (
        an.tracking_duration_stats,
        lambda v: an.perception_noise(v, 1 / f),
        an.motion_speed_stats,
        lambda v: an.min_distance_stats(v, f),
    ):
        assert np.all(np.abs(np.asarray(fn(trajs)) - np.asarray(fn(moved))) < 1e-9)

    # ADE/FDE hand cases, exact
    gt = np.array([[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]])
    exact = an.PredictionCase(1, "1:0", np.zeros((2, 2)), gt, predicted=gt.copy())
    assert an.ade(exact) == 0.0 and an.fde(exact) == 0.0
    shifted = an.PredictionCase(1, "1:0", np.zeros((2, 2)), gt, predicted=gt + [0.3, 0.4])
    assert abs(an.ade(shifted) - 0.5) < 1e-12 and abs(an.fde(shifted) - 0.5) < 1e-12
    growing = an.PredictionCase(
        1, "1:0", np.zeros((2, 2)), np.zeros((3, 2)),
        predicted=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
    )
    assert an.ade(growing) == 1.0 and an.fde(growing) == 2.0

    # dynamic-split monotonicity over 100 random datasets
    for _ in range(100):
        datasets = []
        for pid in range(1, int(rng.integers(3, 8))):
            n = int(rng.integers(25, 80))
            pos = np.cumsum(rng.normal(0.0, 0.09, size=(n, 2)), axis=0)
            datasets.append(
                MetricTrajectory(
                    ped_id=pid,
                    samples=[(i / f, float(p[0]), float(p[1]), 0.0) for i, p in enumerate(pos)],
                )
            )
        window = float(rng.choice([2.0, 3.0, 4.8]))
        prev = None
        for thr in (0.2, 0.5, 1.0, 2.0, 4.0):
            cur = set(an.split_dynamic(datasets, window, thr).dynamic)
            if prev is not None:
                assert cur <= prev, "dynamic set must shrink as the threshold grows"
            prev = cur
        by_mode = {
            m: set(an.split_dynamic(datasets, window, 1.0, m).dynamic)
            for m in ("endpoint", "max", "path")
        }
        assert by_mode["endpoint"] <= by_mode["max"] <= by_mode["path"]


# ---------------------------------------------------------------------------
# criterion 5: service differential


def test_service_differential(rng, tmp_path):
    session = synth.random_store_session(rng, n_tracklets=6, n_trajectories=4)
    root = tmp_path / "sess"
    save_session(session, root)

    client = TestClient(create_app())
    sid = client.post("/sessions/open", json={"path": str(root)}).json()["session_id"]
    live = client.app.state.registry[sid].session
    twin = snapshot(live)
    pristine = snapshot(live)

    head = 0
    mutations = 0
    while mutations < 500:
        roll = rng.uniform()
        if roll < 0.08 and live.action_log.applied:
            assert client.post(f"/sessions/{sid}/undo", json={"client_seq": head}).status_code == 200
            eo.undo(twin)
        elif roll < 0.16 and live.action_log.undone:
            assert client.post(f"/sessions/{sid}/redo", json={"client_seq": head}).status_code == 200
            eo.redo(twin)
        else:
            forbid = {"delete_tj"} if len(twin.trajectories) <= 2 else frozenset()
            edit = synth.random_edit(rng, twin, forbid)
            if edit is None:
                continue
            r = client.post(f"/sessions/{sid}/edits", json={"client_seq": head, **edit})
            assert r.status_code == 200, r.text
            eo.apply_action(twin, edit["kind"], edit["params"])
        head += 1
        mutations += 1
        assert store_state(live) == store_state(twin), f"divergence after mutation {mutations}"

    # offline replay of the acknowledged log reproduces the live store
    loaded = load_session(root)
    assert store_state(loaded) == store_state(twin)
    assert store_state(eo.replay(pristine, live.action_log.applied)) == store_state(twin)

    # byte-identical export across the live store, the twin, and the reload
    paths = [tmp_path / name for name in ("live.csv", "twin.csv", "loaded.csv")]
    an.export_dataset(live, str(paths[0]))
    an.export_dataset(twin, str(paths[1]))
    an.export_dataset(loaded, str(paths[2]))
    assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()

    # crash tolerance: a torn final journal line is dropped on replay
    actions = root / "actions.jsonl"
    with open(actions, "a") as fh:
        fh.write('{"seq": 99999, "ts": 0, "kind": "Delete", "params": {"tar')
    recovered = load_session(root)
    assert store_state(recovered) == store_state(twin), "crash replay must reproduce acked state"


# ---------------------------------------------------------------------------
# criterion 6: released dataset statistics (optional)


EXPECTED_SET2 = {
    "tracking_duration": (25.6, 57.1),
    "perception_noise": 0.55,
    "motion_speed": (0.88, 0.52),
    "min_distance": (1.25, 1.44),
}


@pytest.mark.dataset
@pytest.mark.skipif(
    "TRAJLAB_SET2_DIR" not in os.environ,
    reason="set TRAJLAB_SET2_DIR to the released label tables to run",
)
def test_dataset_statistics():
    root = Path(os.environ["TRAJLAB_SET2_DIR"])
    files = sorted(root.glob("*.csv"))
    assert files, f"no label tables under {root}"
    pooled, freq, next_id = [], None, 1
    for path in files:
        trajs, f = an.load_dataset(str(path))
        if freq is None:
            freq = f
        assert f == freq, f"{path}: grid {f} Hz != {freq} Hz"
        for tr in trajs:
            pooled.append(MetricTrajectory(ped_id=next_id, samples=tr.samples))
            next_id += 1
    report = an.compute_stats(trajectories=pooled, frequency=freq)

    def within(name, got, want, tol=0.15):
        assert abs(got - want) <= tol * abs(want), f"{name}: got {got:.3f}, expected {want} +/- 15%"

    within("duration mean", report.tracking_duration[0], EXPECTED_SET2["tracking_duration"][0])
    within("duration std", report.tracking_duration[1], EXPECTED_SET2["tracking_duration"][1])
    within("noise mean", report.perception_noise, EXPECTED_SET2["perception_noise"])
    within("speed mean", report.motion_speed[0], EXPECTED_SET2["motion_speed"][0])
    within("speed std", report.motion_speed[1], EXPECTED_SET2["motion_speed"][1])
    within("min-distance mean", report.min_distance[0], EXPECTED_SET2["min_distance"][0])
    within("min-distance std", report.min_distance[1], EXPECTED_SET2["min_distance"][1])
    print(json.dumps(report.to_dict(), indent=2))
