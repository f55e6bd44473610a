"""Projective geometry: projection, undistortion, pose recovery, triangulation.

Cameras follow the pinhole model with two radial distortion terms:

    X_cam = R @ X + t,  x' = X_cam.xy / X_cam.z,  r2 = |x'|^2,
    d = 1 + k1*r2 + k2*r2^2,  u = fx*d*x'_u + cx,  v = fy*d*x'_v + cy.

Everything is batched over numpy arrays where it matters; the scalar entry
points wrap the batched kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CalibrationError,
    DegenerateGeometry,
    NonConvergence,
    PointBehindCamera,
    SyncError,
)
from .model import CameraModel, Landmark

UNDISTORT_MAX_ITERS = 20
UNDISTORT_TOL_PX = 1e-6
REFINE_MAX_ITERS = 50
REFINE_STEP_TOL = 1e-10
BEHIND_PENALTY_PX = 1e6


# ---------------------------------------------------------------------------
# projection


def project_many(camera: CameraModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project (N,3) world points; returns ((N,2) pixels, (N,) camera depth).

    Points at or behind the camera plane get non-finite pixels instead of an
    exception; callers that must reject them check the returned depth.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    cam_pts = pts @ camera.R.T + camera.t
    z = cam_pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = cam_pts[:, 0] / z
        yn = cam_pts[:, 1] / z
    r2 = xn * xn + yn * yn
    d = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2
    uv = np.empty((len(pts), 2))
    uv[:, 0] = camera.fx * d * xn + camera.cx
    uv[:, 1] = camera.fy * d * yn + camera.cy
    uv[z <= 0] = np.nan
    return uv, z


def project(camera: CameraModel, point) -> tuple[float, float]:
    """Project one world point to pixels; rejects points behind the camera."""
    uv, z = project_many(camera, np.asarray(point, dtype=float).reshape(1, 3))
    if z[0] <= 0:
        raise PointBehindCamera(
            f"point {tuple(np.asarray(point, dtype=float))} has depth {z[0]:.6f} in camera {camera.camera_id}"
        )
    return float(uv[0, 0]), float(uv[0, 1])


def distort_normalized(camera: CameraModel, xn: np.ndarray) -> np.ndarray:
    """Apply the radial model to (N,2) ideal normalized coordinates."""
    r2 = np.sum(xn * xn, axis=1)
    d = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2
    return xn * d[:, None]


def undistort_many(camera: CameraModel, pixels: np.ndarray) -> np.ndarray:
    """Invert distortion for (N,2) pixels -> (N,2) ideal normalized coords.

    Fixed-point iteration x <- x_d / d(|x|), verified by pushing the result
    back through the forward model.
    """
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    xd = np.empty_like(px)
    xd[:, 0] = (px[:, 0] - camera.cx) / camera.fx
    xd[:, 1] = (px[:, 1] - camera.cy) / camera.fy
    x = xd.copy()
    for _ in range(UNDISTORT_MAX_ITERS):
        r2 = np.sum(x * x, axis=1)
        d = 1.0 + camera.k1 * r2 + camera.k2 * r2 * r2
        x_new = xd / d[:, None]
        if np.all(np.abs(x_new - x) < 1e-12):
            x = x_new
            break
        x = x_new
    # forward check, in pixels
    back = distort_normalized(camera, x)
    err_u = np.abs(back[:, 0] * camera.fx + camera.cx - px[:, 0])
    err_v = np.abs(back[:, 1] * camera.fy + camera.cy - px[:, 1])
    bad = np.nonzero((err_u > UNDISTORT_TOL_PX) | (err_v > UNDISTORT_TOL_PX))[0]
    if bad.size:
        i = int(bad[0])
        raise NonConvergence(
            f"undistortion did not converge for pixel ({px[i, 0]:.2f}, {px[i, 1]:.2f}) "
            f"in camera {camera.camera_id}: residual {max(err_u[i], err_v[i]):.3e} px "
            f"after {UNDISTORT_MAX_ITERS} iterations"
        )
    return x


def undistort(camera: CameraModel, pixel) -> tuple[float, float]:
    """Pixel -> ideal normalized image coordinates (distortion removed)."""
    x = undistort_many(camera, np.asarray(pixel, dtype=float).reshape(1, 2))
    return float(x[0, 0]), float(x[0, 1])


def reprojection_error(camera: CameraModel, point, pixel) -> float:
    """Euclidean pixel error of one point against one observation.

    A point behind the camera scores the standard large penalty instead of
    raising, so optimizers and scorers can rank it as terrible-but-finite.
    """
    uv, z = project_many(camera, np.asarray(point, dtype=float).reshape(1, 3))
    if z[0] <= 0:
        return BEHIND_PENALTY_PX
    obs = np.asarray(pixel, dtype=float)
    return float(np.hypot(uv[0, 0] - obs[0], uv[0, 1] - obs[1]))


def rms_reprojection_error(cameras: list[CameraModel], point, pixels: list) -> float:
    """RMS over per-camera reprojection errors (behind-camera views penalized)."""
    errs = [reprojection_error(cam, point, px) for cam, px in zip(cameras, pixels)]
    return float(np.sqrt(np.mean(np.square(errs))))


# ---------------------------------------------------------------------------
# rotation helpers


def rodrigues(w: np.ndarray) -> np.ndarray:
    """Axis-angle (3,) -> rotation matrix."""
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        K = skew(w)
        return np.eye(3) + K  # first-order; exact at w = 0
    k = w / theta
    K = skew(k)
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]], dtype=float)


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Orthogonal Procrustes projection of a 3x3 matrix onto SO(3)."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


# ---------------------------------------------------------------------------
# extrinsic calibration (pose from surveyed landmarks)


@dataclass(frozen=True)
class CalibrationResult:
    R: np.ndarray
    t: np.ndarray
    residual_px: float
    iterations: int


def _normalize_2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity normalization: centroid 0, mean distance sqrt(2)."""
    c = x.mean(axis=0)
    d = np.linalg.norm(x - c, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    xh = np.hstack([x, np.ones((len(x), 1))]) @ T.T
    return xh[:, :2], T


def _normalize_3d(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity normalization: centroid 0, mean distance sqrt(3)."""
    c = X.mean(axis=0)
    d = np.linalg.norm(X - c, axis=1).mean()
    s = np.sqrt(3.0) / d if d > 0 else 1.0
    U = np.diag([s, s, s, 1.0])
    U[:3, 3] = -s * c
    Xh = np.hstack([X, np.ones((len(X), 1))]) @ U.T
    return Xh[:, :3], U


def _dlt_pose(X: np.ndarray, xn: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Direct linear pose from (N,3) world points and (N,2) ideal coords."""
    Xn, U = _normalize_3d(X)
    xnn, T = _normalize_2d(xn)
    n = len(X)
    A = np.zeros((2 * n, 12))
    for i in range(n):
        Xw = np.append(Xn[i], 1.0)
        u, v = xnn[i]
        A[2 * i, 0:4] = Xw
        A[2 * i, 8:12] = -u * Xw
        A[2 * i + 1, 4:8] = Xw
        A[2 * i + 1, 8:12] = -v * Xw
    _, s, Vt = np.linalg.svd(A)
    if s[0] <= 0 or s[-2] / s[0] < 1e-10:
        raise DegenerateGeometry(
            f"pose system is rank-deficient (singular value ratio {s[-2] / max(s[0], 1e-300):.2e}); "
            "landmarks are likely coplanar with the camera or collinear"
        )
    P = Vt[-1].reshape(3, 4)
    # undo the normalizations: xn = T^-1 @ P @ U @ X
    P = np.linalg.inv(T) @ P @ U
    # fix cheirality: points must land in front of the camera
    Xh = np.hstack([X, np.ones((n, 1))])
    depths = Xh @ P[2]
    if np.sum(depths > 0) < np.sum(depths < 0):
        P = -P
    M = P[:, :3]
    scale = np.cbrt(np.linalg.det(M))
    if abs(scale) < 1e-12:
        raise DegenerateGeometry("recovered pose has a singular rotation block")
    P = P / scale
    R = nearest_rotation(P[:, :3])
    t = P[:, 3]
    return R, t


def _pose_residuals(R: np.ndarray, t: np.ndarray, X: np.ndarray, xn: np.ndarray) -> np.ndarray:
    cam = X @ R.T + t
    z = cam[:, 2]
    if np.any(z <= 0):
        raise DegenerateGeometry("pose places a landmark behind the camera")
    pred = cam[:, :2] / z[:, None]
    return (pred - xn).reshape(-1)


def _refine_pose(
    R: np.ndarray, t: np.ndarray, X: np.ndarray, xn: np.ndarray
) -> tuple[np.ndarray, np.ndarray, int]:
    """Gauss-Newton on (w, t) with left-perturbation R <- exp(w) R."""
    iters = 0
    cost = float(np.sum(_pose_residuals(R, t, X, xn) ** 2))
    for iters in range(1, REFINE_MAX_ITERS + 1):
        cam = X @ R.T + t
        z = cam[:, 2]
        pred = cam[:, :2] / z[:, None]
        res = (pred - xn).reshape(-1)
        n = len(X)
        J = np.zeros((2 * n, 6))
        inv_z = 1.0 / z
        # d(pred)/d(cam): [[1/z, 0, -x/z^2], [0, 1/z, -y/z^2]]
        # d(cam)/dw = -skew(cam) (left perturbation), d(cam)/dt = I
        for i in range(n):
            x, y, zi = cam[i]
            dp = np.array([[inv_z[i], 0, -x * inv_z[i] ** 2], [0, inv_z[i], -y * inv_z[i] ** 2]])
            J[2 * i : 2 * i + 2, :3] = dp @ (-skew(cam[i]))
            J[2 * i : 2 * i + 2, 3:] = dp
        try:
            step = np.linalg.lstsq(J, -res, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        if np.linalg.norm(step) < REFINE_STEP_TOL:
            break
        # backtracking line search on the residual norm
        lam = 1.0
        for _ in range(12):
            R_try = rodrigues(lam * step[:3]) @ R
            t_try = t + lam * step[3:]
            try:
                new_cost = float(np.sum(_pose_residuals(R_try, t_try, X, xn) ** 2))
            except DegenerateGeometry:
                new_cost = np.inf
            if new_cost < cost:
                R, t, cost = R_try, t_try, new_cost
                break
            lam *= 0.5
        else:
            break
    return R, t, iters


def calibrate_extrinsics(camera: CameraModel, landmarks: list[Landmark]) -> CalibrationResult:
    """Recover the camera pose from surveyed landmarks observed in its image.

    Uses the landmarks with an observation in this camera; needs at least six.
    Observations are undistorted, the pose is solved linearly, then refined
    by Gauss-Newton in ideal coordinates. The residual reported is the RMS
    pixel reprojection error through the full model.
    """
    world, pixels = [], []
    for lm in landmarks:
        obs = lm.observations.get(camera.camera_id)
        if obs is not None:
            world.append(lm.world)
            pixels.append(obs)
    if len(world) < 6:
        raise CalibrationError(
            f"camera {camera.camera_id}: {len(world)} landmark observations, need at least 6"
        )
    X = np.asarray(world, dtype=float)
    px = np.asarray(pixels, dtype=float)
    xn = undistort_many(camera, px)
    R, t = _dlt_pose(X, xn)
    R, t, iterations = _refine_pose(R, t, X, xn)

    posed = CameraModel(camera.camera_id, camera.fx, camera.fy, camera.cx, camera.cy, camera.k1, camera.k2, R, t)
    uv, z = project_many(posed, X)
    if np.any(z <= 0):
        raise CalibrationError(f"camera {camera.camera_id}: refined pose leaves a landmark behind the camera")
    residual = float(np.sqrt(np.mean(np.sum((uv - px) ** 2, axis=1))))
    return CalibrationResult(R=R, t=t, residual_px=residual, iterations=iterations)


# ---------------------------------------------------------------------------
# triangulation


@dataclass(frozen=True)
class TriangulationResult:
    point: np.ndarray
    rms_px: float
    behind: bool


def _stack_rays(cameras: list[CameraModel], pixels: np.ndarray) -> np.ndarray:
    """Ideal-coordinate DLT design rows for one point seen in n cameras."""
    rows = []
    for cam, px in zip(cameras, pixels):
        xn, yn = undistort(cam, px)
        P = np.hstack([cam.R, cam.t[:, None]])
        rows.append(xn * P[2] - P[0])
        rows.append(yn * P[2] - P[1])
    return np.asarray(rows)


def triangulate_many(
    cameras: list[CameraModel],
    pixels: np.ndarray,
    mask: np.ndarray | None = None,
    refine: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Triangulate T points seen by the same camera set, batched.

    ``pixels`` is (T, C, 2); ``mask`` is (T, C) of which views are present
    (all views when omitted). Returns ``(points (T,3), rms_px (T,), ok (T,))``
    where ``ok`` is False for rows with fewer than two views, a degenerate
    system, or a solution behind any contributing camera — such rows carry
    NaN points and the behind-camera penalty as their error.

    The linear stage is a batched ideal-coordinate DLT; the refinement stage
    runs Gauss-Newton on the full distortion model against the raw pixels.
    """
    px = np.asarray(pixels, dtype=float)
    T, C = px.shape[0], px.shape[1]
    if mask is None:
        mask = np.ones((T, C), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)

    # ideal coordinates per camera (vectorized over T)
    ideal = np.full((T, C, 2), np.nan)
    for c, cam in enumerate(cameras):
        rows = np.nonzero(mask[:, c])[0]
        if rows.size:
            ideal[rows, c] = undistort_many(cam, px[rows, c])

    P = np.stack([np.hstack([cam.R, cam.t[:, None]]) for cam in cameras])  # (C,3,4)

    # batched DLT: rows x*P2 - P0, y*P2 - P1 for each present view
    A = np.zeros((T, 2 * C, 4))
    for c in range(C):
        A[:, 2 * c] = ideal[:, c, 0:1] * P[c, 2] - P[c, 0]
        A[:, 2 * c + 1] = ideal[:, c, 1:2] * P[c, 2] - P[c, 1]
    A[~np.repeat(mask, 2, axis=1)] = 0.0

    nviews = mask.sum(axis=1)
    ok = nviews >= 2
    pts = np.full((T, 3), np.nan)
    rms = np.full(T, BEHIND_PENALTY_PX)
    if not np.any(ok):
        return pts, rms, ok

    idx = np.nonzero(ok)[0]
    _, s, Vt = np.linalg.svd(A[idx])
    h = Vt[:, -1]  # (n,4)
    w = h[:, 3]
    degen = (np.abs(w) < 1e-12) | (s[:, -2] < 1e-12 * np.maximum(s[:, 0], 1e-300))
    pts[idx] = h[:, :3] / np.where(np.abs(w) < 1e-12, np.nan, w)[:, None]
    ok[idx[degen]] = False
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        pts[~ok] = np.nan
        return pts, rms, ok

    if refine:
        pts[idx] = _refine_points(cameras, px[idx], mask[idx], pts[idx])

    # full-model error + cheirality
    sq = np.zeros(len(idx))
    behind = np.zeros(len(idx), dtype=bool)
    for c, cam in enumerate(cameras):
        m = mask[idx, c]
        if not np.any(m):
            continue
        uv, z = project_many(cam, pts[idx])
        err2 = np.sum((uv - px[idx, c]) ** 2, axis=1)
        behind |= m & (z <= 0)
        sq += np.where(m & (z > 0), err2, 0.0)
    with np.errstate(invalid="ignore"):
        rms[idx] = np.sqrt(sq / nviews[idx])
    rms[idx[behind]] = BEHIND_PENALTY_PX
    ok[idx[behind]] = False
    pts[~ok] = np.nan
    return pts, rms, ok


def _refine_points(
    cameras: list[CameraModel], px: np.ndarray, mask: np.ndarray, pts: np.ndarray
) -> np.ndarray:
    """Batched Gauss-Newton point polish against the full projection model."""
    n = len(pts)
    pts = pts.copy()
    active = np.ones(n, dtype=bool)
    for _ in range(10):
        if not np.any(active):
            break
        JTJ = np.zeros((n, 3, 3))
        JTr = np.zeros((n, 3))
        valid = active.copy()
        for c, cam in enumerate(cameras):
            m = mask[:, c] & active
            if not np.any(m):
                continue
            cam_pts = pts @ cam.R.T + cam.t
            x, y, z = cam_pts[:, 0], cam_pts[:, 1], cam_pts[:, 2]
            front = z > 1e-9
            valid &= ~(mask[:, c] & ~front)
            m = m & front
            if not np.any(m):
                continue
            inv_z = np.where(front, 1.0 / np.where(front, z, 1.0), 0.0)
            xn = x * inv_z
            yn = y * inv_z
            r2 = xn * xn + yn * yn
            d = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2
            dd = cam.k1 + 2.0 * cam.k2 * r2  # d(d)/d(r2)
            u = cam.fx * d * xn + cam.cx
            v = cam.fy * d * yn + cam.cy
            # du/d(xn, yn) through d(r2) = 2 xn dxn + 2 yn dyn
            du_dxn = cam.fx * (d + 2.0 * xn * xn * dd)
            du_dyn = cam.fx * (2.0 * xn * yn * dd)
            dv_dxn = cam.fy * (2.0 * xn * yn * dd)
            dv_dyn = cam.fy * (d + 2.0 * yn * yn * dd)
            # d(xn,yn)/d(cam) rows
            zero = np.zeros_like(inv_z)
            dxn = np.stack([inv_z, zero, -xn * inv_z], axis=1)  # (n,3)
            dyn = np.stack([zero, inv_z, -yn * inv_z], axis=1)
            Ju = (du_dxn[:, None] * dxn + du_dyn[:, None] * dyn) @ cam.R  # chain to world via d(cam)/dX = R
            Jv = (dv_dxn[:, None] * dxn + dv_dyn[:, None] * dyn) @ cam.R
            ru = u - px[:, c, 0]
            rv = v - px[:, c, 1]
            w = m.astype(float)[:, None]
            JTJ += (Ju[:, :, None] * Ju[:, None, :] + Jv[:, :, None] * Jv[:, None, :]) * w[:, :, None]
            JTr += (Ju * (ru * m)[:, None]) + (Jv * (rv * m)[:, None])
        active &= valid
        if not np.any(active):
            break
        JTJ[:, 0, 0] += 1e-12
        JTJ[:, 1, 1] += 1e-12
        JTJ[:, 2, 2] += 1e-12
        try:
            step = np.linalg.solve(JTJ[active], -JTr[active][:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            break
        pts[active] += step
        moved = np.zeros(n, dtype=bool)
        moved[active] = np.linalg.norm(step, axis=1) > 1e-12
        active &= moved
    return pts


def triangulate(cameras: list[CameraModel], pixels: list) -> TriangulationResult:
    """Triangulate one point from >= 2 calibrated views.

    Raises :class:`DegenerateGeometry` for < 2 views or an unsolvable system;
    a solution behind a camera is returned flagged with the penalty error.
    """
    if len(cameras) < 2:
        raise DegenerateGeometry(f"triangulation needs >= 2 views, got {len(cameras)}")
    px = np.asarray(pixels, dtype=float).reshape(1, len(cameras), 2)
    pts, rms, ok = triangulate_many(cameras, px)
    if not ok[0] and not np.all(np.isfinite(pts[0])):
        raise DegenerateGeometry("triangulation system is degenerate (parallel or duplicate rays)")
    return TriangulationResult(point=pts[0], rms_px=float(rms[0]), behind=not ok[0])


# ---------------------------------------------------------------------------
# time alignment


def align_frames(
    marker_frames: dict[str, int], reference: str, required: list[str] | None = None
) -> dict[str, int]:
    """Per-camera frame offsets from the shared sync-marker sightings.

    ``offset[c] = marker[c] - marker[ref]``; camera-local frame f maps to the
    shared timeline as ``f - offset[c]``, so time = (f - offset) / fps.
    ``required`` lists cameras that must have a marker sighting.
    """
    for cid in required or ():
        if cid not in marker_frames:
            raise SyncError(f"missing marker for camera {cid!r}")
    if reference not in marker_frames:
        raise SyncError(f"reference camera {reference!r} has no marker frame")
    ref_frame = marker_frames[reference]
    return {cid: int(f - ref_frame) for cid, f in marker_frames.items()}


def detect_marker(luminance, baseline_frames: int = 30, mad_multiple: float = 3.0) -> int:
    """First frame where a luminance series jumps above its early baseline.

    The baseline is the median of the first ``baseline_frames`` samples and
    the threshold is ``baseline + mad_multiple * MAD`` (MAD of the same
    window). Raises :class:`SyncError` when no frame exceeds it.
    """
    series = np.asarray(luminance, dtype=float)
    if len(series) < baseline_frames:
        raise SyncError(f"need at least {baseline_frames} frames to estimate a baseline, got {len(series)}")
    base = series[:baseline_frames]
    med = float(np.median(base))
    mad = float(np.median(np.abs(base - med)))
    thresh = med + mad_multiple * mad
    above = np.nonzero(series > thresh)[0]
    if above.size == 0:
        raise SyncError(f"no luminance step above {thresh:.3f} (median {med:.3f}, MAD {mad:.3f})")
    return int(above[0])
