"""Exception types shared across the pipeline."""


class TrajlabError(Exception):
    """Base class for all pipeline errors."""


class ModelError(TrajlabError):
    """Invalid model construction or configuration."""


class StoreError(TrajlabError):
    """Session persistence failure (I/O, schema version, invariants)."""


class FormatError(TrajlabError):
    """Malformed interchange file."""


class PointBehindCamera(TrajlabError):
    """World point has non-positive depth in a camera frame."""


class NonConvergence(TrajlabError):
    """Iterative solve exceeded its iteration cap."""


class DegenerateGeometry(TrajlabError):
    """Triangulation or calibration geometry is rank-deficient."""


class CalibrationError(TrajlabError):
    """Extrinsics estimation failed."""


class SyncError(TrajlabError):
    """Frame synchronization failure."""


class TrackError(TrajlabError):
    """Tracker input violates its preconditions."""


class LiftError(TrajlabError):
    """Pixel-to-metric lifting precondition failure."""


class EditError(TrajlabError):
    """Edit action precondition failure."""


class StatsError(TrajlabError):
    """Statistics precondition failure."""


class EvalError(TrajlabError):
    """Prediction evaluation failure."""
