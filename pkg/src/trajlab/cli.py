"""Command-line front-end: batch pipeline steps plus the labeling service.

Every subcommand prints a one-line machine-readable JSON summary on stdout
and exits nonzero with a one-line JSON error on stderr when a step fails.
The expected order is ingest/track -> calibrate -> sync -> lift -> label
(serve) -> stats/eval/export; steps that rewrite the pre-correction store
refuse to run once corrections exist.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import analytics, editops, lifting
from .errors import CalibrationError, StoreError, TrackError, TrajlabError
from .geometry import align_frames, calibrate_extrinsics, detect_marker
from .model import (
    CameraModel,
    SessionConfig,
    Session,
    create_session,
    landmark_from_dict,
    store_state,
)
from .store import load_session, save_session
from .tracking import TrackerParams, import_tracklets, read_detections, track_detections


def _emit(payload: dict) -> None:
    click.echo(json.dumps(payload))


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrajlabError as e:
            click.echo(json.dumps({"error": type(e).__name__, "message": str(e)}), err=True)
            sys.exit(1)

    return wrapper


def _session_from_config(path: str) -> Session:
    with open(path) as fh:
        cfg = json.load(fh)
    cameras = []
    calibrated = []
    for c in cfg["cameras"]:
        cam = CameraModel(
            camera_id=c["camera_id"],
            fx=float(c["fx"]),
            fy=float(c["fy"]),
            cx=float(c["cx"]),
            cy=float(c["cy"]),
            k1=float(c.get("k1", 0.0)),
            k2=float(c.get("k2", 0.0)),
            R=np.asarray(c["R"], dtype=float).reshape(3, 3) if "R" in c else None,
            t=np.asarray(c["t"], dtype=float) if "t" in c else None,
        )
        cameras.append(cam)
        if "R" in c and "t" in c:
            calibrated.append(cam.camera_id)
    return create_session(
        SessionConfig(
            session_id=cfg["session_id"],
            cameras=cameras,
            label_frequency=float(cfg["label_frequency"]),
            camera_fps=float(cfg["camera_fps"]) if "camera_fps" in cfg else None,
            reference_camera=cfg.get("reference_camera"),
            calibrated=calibrated,
        )
    )


def _load_or_create(session_dir: str, config_path: str | None) -> Session:
    if (Path(session_dir) / "manifest.json").exists():
        return load_session(session_dir)
    if config_path is None:
        raise StoreError(f"no session at {session_dir}; pass --config to create one")
    session = _session_from_config(config_path)
    save_session(session, session_dir)
    return session


def _require_no_corrections(session: Session) -> None:
    if session.action_log.applied or session.action_log.undone:
        raise StoreError("session already has corrections; pipeline steps must precede labeling")


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized steps.")
@click.pass_context
def main(ctx, seed):
    """Multi-camera pedestrian trajectory labeling pipeline."""
    ctx.obj = {"seed": seed}


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@click.option("--tracklets", "tracklets_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", default=None, help="Only ingest records of this camera.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@guarded
def ingest(session_dir, tracklets_path, camera, config_path):
    """Import externally produced tracklets into a session."""
    session = _load_or_create(session_dir, config_path)
    _require_no_corrections(session)
    imported = import_tracklets(tracklets_path, camera)
    known = set(session.camera_ids())
    for t in imported:
        if t.camera_id not in known:
            raise TrackError(f"tracklet {t.id}: unknown camera {t.camera_id!r}")
    ids = [session.add_tracklet(t) for t in imported]
    save_session(session, session_dir)
    _emit({"session_id": session.session_id, "imported": len(ids), "tracklets_total": len(session.tracklets)})


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@click.option(
    "--detections",
    "detections_paths",
    required=True,
    multiple=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--camera", default=None, help="Only track this camera's detections.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--high-threshold", default=0.6, show_default=True)
@click.option("--low-threshold", default=0.1, show_default=True)
@click.option("--iou-gate", default=0.3, show_default=True)
@click.option("--max-coast-frames", default=30, show_default=True)
@click.option("--min-track-length", default=5, show_default=True)
@guarded
def track(
    session_dir,
    detections_paths,
    camera,
    config_path,
    high_threshold,
    low_threshold,
    iou_gate,
    max_coast_frames,
    min_track_length,
):
    """Run the baseline tracker over a detection file."""
    session = _load_or_create(session_dir, config_path)
    _require_no_corrections(session)
    params = TrackerParams(
        high_score_threshold=high_threshold,
        low_score_threshold=low_threshold,
        iou_gate=iou_gate,
        max_coast_frames=max_coast_frames,
        min_track_length=min_track_length,
    )
    per_camera: dict[str, list] = {}
    for path in detections_paths:
        for cam, frames in read_detections(path, camera).items():
            if cam in per_camera:
                raise TrackError(f"camera {cam!r} appears in more than one detection file")
            per_camera[cam] = frames
    known = set(session.camera_ids())
    counts = {}
    for cam in sorted(per_camera):
        if cam not in known:
            raise TrackError(f"detections reference unknown camera {cam!r}")
        tracklets = track_detections(per_camera[cam], params)
        for t in tracklets:
            session.add_tracklet(t)
        counts[cam] = len(tracklets)
    save_session(session, session_dir)
    _emit({"session_id": session.session_id, "cameras": counts, "tracklets_total": len(session.tracklets)})


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@click.option("--landmarks", "landmarks_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", "cameras", multiple=True, help="Calibrate only these cameras.")
@guarded
def calibrate(session_dir, landmarks_path, cameras):
    """Recover camera poses from surveyed landmark observations."""
    session = load_session(session_dir)
    with open(landmarks_path) as fh:
        session.landmarks = [landmark_from_dict(d) for d in json.load(fh)]
    if cameras:
        targets = list(cameras)
        unknown = [c for c in targets if c not in session.camera_ids()]
        if unknown:
            raise CalibrationError(f"unknown cameras {unknown}")
    else:
        counts = {cid: 0 for cid in session.camera_ids()}
        for lm in session.landmarks:
            for cid in lm.observations:
                if cid in counts:
                    counts[cid] += 1
        targets = [cid for cid, n in counts.items() if n >= 6]
        if not targets:
            raise CalibrationError("no camera has >= 6 landmark observations")
    residuals = {}
    for cid in targets:
        camera = session.camera(cid)
        result = calibrate_extrinsics(camera, session.landmarks)
        camera.R = result.R
        camera.t = result.t
        session.calibration[cid] = {
            "source": "landmarks",
            "residual_px": result.residual_px,
            "iterations": result.iterations,
        }
        residuals[cid] = result.residual_px
    save_session(session, session_dir)
    _emit({"session_id": session.session_id, "calibrated": residuals})


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@click.option("--markers", "markers_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--luminance",
    "luminance_specs",
    multiple=True,
    help="CAMERA=CSV of per-frame luminance; the marker frame is detected.",
)
@click.option("--baseline-frames", default=30, show_default=True)
@click.option("--mad-multiple", default=3.0, show_default=True)
@guarded
def sync(session_dir, markers_path, luminance_specs, baseline_frames, mad_multiple):
    """Align camera timelines from the shared sync-marker sightings."""
    session = load_session(session_dir)
    markers: dict[str, int] = {}
    if markers_path:
        with open(markers_path) as fh:
            markers.update({cid: int(frame) for cid, frame in json.load(fh).items()})
    for spec in luminance_specs:
        cam, _, path = spec.partition("=")
        if not path:
            raise StoreError(f"--luminance expects CAMERA=CSV, got {spec!r}")
        values = [float(line) for line in Path(path).read_text().split() if line.strip()]
        markers[cam] = detect_marker(values, baseline_frames, mad_multiple)
    session.sync_offsets = align_frames(markers, session.reference_camera, required=session.camera_ids())
    save_session(session, session_dir)
    _emit({"session_id": session.session_id, "offsets": session.sync_offsets})


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@click.option("--tau", default=lifting.DEFAULT_TAU_PX, show_default=True, help="Max mean reprojection error, px.")
@click.option("--min-overlap", default=lifting.DEFAULT_MIN_OVERLAP, show_default=True)
@guarded
def lift(session_dir, tau, min_overlap):
    """Associate tracklets across cameras and lift them to metric space."""
    session = load_session(session_dir)
    _require_no_corrections(session)
    association = lifting.associate_cross_view(session, tau, min_overlap)
    pids = lifting.lift_session(session, association, min_overlap)
    save_session(session, session_dir)
    errors = [m.error for m in association.matches]
    _emit(
        {
            "session_id": session.session_id,
            "trajectories": len(pids),
            "matches": len(association.matches),
            "unmatched": len(association.unmatched),
            "mean_reprojection_error_px": float(np.mean(errors)) if errors else None,
        }
    )


def _stats_inputs(session_dir, dataset_path, frequency):
    if (session_dir is None) == (dataset_path is None):
        raise StoreError("pass exactly one of --session or --dataset")
    if session_dir is not None:
        session = load_session(session_dir)
        views = analytics.interpolated_views(session, frequency)
        f = frequency if frequency is not None else session.label_frequency
        return views, f
    trajectories, inferred = analytics.load_dataset(dataset_path)
    return trajectories, frequency if frequency is not None else inferred


@main.command()
@click.option("--session", "session_dir", default=None, type=click.Path())
@click.option("--dataset", "dataset_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--frequency", default=None, type=float, help="Analysis frequency, Hz.")
@guarded
def stats(session_dir, dataset_path, frequency):
    """Summary statistics of the labeled trajectories."""
    trajectories, f = _stats_inputs(session_dir, dataset_path, frequency)
    report = analytics.compute_stats(trajectories=trajectories, frequency=f)
    _emit(report.to_dict())


@main.command("eval")
@click.option("--session", "session_dir", default=None, type=click.Path())
@click.option("--dataset", "dataset_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--frequency", default=None, type=float)
@click.option("--predictions", "prediction_paths", multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--t-obs", default=3.2, show_default=True)
@click.option("--t-pred", default=4.8, show_default=True)
@click.option("--stride", default=None, type=float, help="Window stride, s (default: t-pred).")
@click.option("--threshold", default=1.0, show_default=True, help="Dynamic displacement threshold, m.")
@click.option("--mode", default="max", show_default=True, type=click.Choice(["max", "path", "endpoint"]))
@click.option("--write-cv-baseline", "cv_path", default=None, type=click.Path(), help="Write and score a constant-velocity baseline.")
@guarded
def eval_cmd(session_dir, dataset_path, frequency, prediction_paths, t_obs, t_pred, stride, threshold, mode, cv_path):
    """Displacement-error evaluation with a static/dynamic split."""
    trajectories, f = _stats_inputs(session_dir, dataset_path, frequency)
    paths = list(prediction_paths)
    if cv_path is not None:
        cases = analytics.enumerate_cases(trajectories, f, t_obs, t_pred, stride if stride is not None else t_pred)
        analytics.write_cv_baseline(cases, cv_path, f)
        if cv_path not in paths:
            paths.append(cv_path)
    report = analytics.evaluate_predictions(
        trajectories, f, paths, t_obs=t_obs, t_pred=t_pred, stride=stride, threshold=threshold, mode=mode
    )
    _emit(report)


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--frequency", default=None, type=float, help="Export frequency, Hz (default: label frequency).")
@guarded
def export(session_dir, out_path, frequency):
    """Write the released label table."""
    session = load_session(session_dir)
    _emit(analytics.export_dataset(session, out_path, frequency))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the labeling service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


@main.command()
@click.option("--session", "session_dir", required=True, type=click.Path())
@guarded
def replay(session_dir):
    """Audit a session: re-run its correction log against the baseline."""
    session = load_session(session_dir)
    base = session
    # load_session already replays the on-disk log; verify it a second time
    # from the freshly derived baseline to catch non-replayable logs.
    from .store import _baseline

    replayed = editops.replay(_baseline(session), session.action_log.applied)
    match = store_state(replayed) == store_state(base)
    _emit({"session_id": session.session_id, "actions": len(session.action_log.applied), "match": match})
    if not match:
        sys.exit(1)


if __name__ == "__main__":
    main()
