"""trajlab: multi-camera pedestrian trajectory labeling.

Pixel-space tracking ingestion, landmark calibration, cross-view lifting to
metric trajectories, a replayable human-correction algebra with an HTTP
service, and dataset analytics/export.
"""

from .errors import TrajlabError
from .model import (
    BBox,
    CameraModel,
    Landmark,
    MetricTrajectory,
    Session,
    SessionConfig,
    Tracklet,
    create_session,
    snapshot,
    validate,
)
from .store import load_session, save_session

__version__ = "0.1.0"

__all__ = [
    "TrajlabError",
    "BBox",
    "CameraModel",
    "Landmark",
    "MetricTrajectory",
    "Session",
    "SessionConfig",
    "Tracklet",
    "create_session",
    "snapshot",
    "validate",
    "load_session",
    "save_session",
    "__version__",
]
