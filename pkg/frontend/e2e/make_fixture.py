"""Build the deterministic session the UI end-to-end test drives.

Usage: python3 make_fixture.py OUT_DIR

Writes a saved session with two overhead cameras, two disjoint trajectories
(so a Join is legal, and a Break of the joined track is too), and one
tracklet per camera for the overlay. Prints the session directory path.
"""

import sys

import numpy as np

from trajlab.model import BBox, CameraModel, MetricTrajectory, Session, Tracklet
from trajlab.store import save_session

LABEL_FREQUENCY = 10.0
CAMERA_FPS = 30.0


def overhead_camera(camera_id: str, x0: float, y0: float, height: float) -> CameraModel:
    """Camera at (x0, y0, height) looking straight down, +x image right."""
    R = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    center = np.array([x0, y0, height])
    return CameraModel(camera_id, fx=1000.0, fy=1000.0, cx=640.0, cy=360.0, R=R, t=-R @ center)


def walk(first_k: int, n: int, x0: float, y: float) -> list[tuple[float, float, float, float]]:
    """Straight 0.6 m/s walk along +x, sampled on the label grid."""
    return [(k / LABEL_FREQUENCY, x0 + 0.06 * (k - first_k), y, 0.0) for k in range(first_k, first_k + n)]


def drifting_boxes(first_frame: int, n: int, u0: float, v0: float) -> list[tuple[int, BBox]]:
    return [
        (first_frame + 3 * i, BBox(u0 + 2.0 * i, v0, u0 + 2.0 * i + 30.0, v0 + 60.0))
        for i in range(n)
    ]


def build(out_dir: str) -> None:
    session = Session(
        session_id="ui-fixture",
        label_frequency=LABEL_FREQUENCY,
        camera_fps=CAMERA_FPS,
        cameras=[overhead_camera("cam1", 5.0, 2.0, 8.0), overhead_camera("cam2", 5.0, 4.0, 8.0)],
        reference_camera="cam1",
        sync_offsets={"cam1": 0, "cam2": 6},
        calibration={"cam1": {"source": "config"}, "cam2": {"source": "config"}},
    )
    session.tracklets = {
        1: Tracklet(1, "cam1", drifting_boxes(0, 50, 400.0, 300.0)),
        2: Tracklet(2, "cam2", drifting_boxes(6, 30, 500.0, 200.0)),
    }
    session.trajectories = {
        1: MetricTrajectory(1, walk(0, 50, 2.0, 2.0), [("cam1", 1)]),
        2: MetricTrajectory(2, walk(60, 50, 5.5, 2.0), [("cam2", 2)]),
    }
    session.next_tracklet_id = 3
    session.next_trajectory_id = 3
    save_session(session, out_dir)
    print(out_dir)


if __name__ == "__main__":
    build(sys.argv[1])
