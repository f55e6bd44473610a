"""Dataset analytics over labeled trajectories.

Summary statistics (duration, perception noise, speed, inter-person
distance), displacement-error evaluation of trajectory predictors with a
static/dynamic split, and the label export/import round trip.

All metrics are computed on ground-plane (x, y) positions with population
standard deviations; every methodological choice is echoed in the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvalError, FormatError, StatsError
from .model import MetricTrajectory, Session

DYNAMIC_THRESHOLD_M = 1.0
SPEED_WINDOW_S = 1.0


def _times(traj: MetricTrajectory) -> np.ndarray:
    return np.array([s[0] for s in traj.samples])


def _xy(traj: MetricTrajectory) -> np.ndarray:
    return np.array([[s[1], s[2]] for s in traj.samples])


def _pop_stats(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# summary statistics


def tracking_duration_stats(trajectories: list[MetricTrajectory]) -> tuple[float, float]:
    """Mean and population std of per-trajectory duration, seconds."""
    if not trajectories:
        raise StatsError("no trajectories")
    durations = [t.samples[-1][0] - t.samples[0][0] for t in trajectories]
    return _pop_stats(durations)


def perception_noise(trajectories: list[MetricTrajectory], dt: float) -> float:
    """Mean central-difference acceleration magnitude, m/s^2.

    A proxy for label jitter: interior samples of every trajectory are
    pooled. Requires uniform sampling at ``dt`` (within 1e-6 s) and at
    least three samples per trajectory.
    """
    if not trajectories:
        raise StatsError("no trajectories")
    norms = []
    for traj in trajectories:
        if len(traj.samples) < 3:
            raise StatsError(f"trajectory {traj.ped_id} has fewer than 3 samples")
        t = _times(traj)
        gaps = np.diff(t)
        if np.any(np.abs(gaps - dt) > 1e-6):
            worst = float(gaps[np.argmax(np.abs(gaps - dt))])
            raise StatsError(f"trajectory {traj.ped_id}: sampling step {worst} differs from dt={dt}")
        p = _xy(traj)
        acc = (p[2:] - 2 * p[1:-1] + p[:-2]) / dt**2
        norms.append(np.linalg.norm(acc, axis=1))
    return float(np.concatenate(norms).mean())


def motion_speed_stats(trajectories: list[MetricTrajectory]) -> tuple[float, float]:
    """Mean and population std of speeds over non-overlapping 1 s windows.

    Window boundaries are linearly interpolated between samples. Trajectories
    shorter than 1 s contribute nothing; all short is an error.
    """
    speeds = []
    for traj in trajectories:
        t = _times(traj)
        span = t[-1] - t[0]
        n_win = int(math.floor(span + 1e-9))
        if n_win < 1:
            continue
        bounds = t[0] + np.arange(n_win + 1) * SPEED_WINDOW_S
        p = _xy(traj)
        bx = np.interp(bounds, t, p[:, 0])
        by = np.interp(bounds, t, p[:, 1])
        steps = np.hypot(np.diff(bx), np.diff(by))
        speeds.extend(steps / SPEED_WINDOW_S)
    if not speeds:
        raise StatsError("all trajectories are shorter than the 1 s speed window")
    return _pop_stats(speeds)


def min_distance_stats(trajectories: list[MetricTrajectory], frequency: float) -> tuple[float, float]:
    """Per-instant minimum pairwise distance, aggregated over instants.

    Samples are grouped onto the shared grid by rounding ``time * frequency``;
    instants with fewer than two pedestrians are excluded.
    """
    instants: dict[int, list[tuple[float, float]]] = {}
    for traj in trajectories:
        for s in traj.samples:
            instants.setdefault(int(round(s[0] * frequency)), []).append((s[1], s[2]))
    mins = []
    for k in sorted(instants):
        pts = instants[k]
        if len(pts) < 2:
            continue
        arr = np.asarray(pts)
        d = np.linalg.norm(arr[:, None, :] - arr[None, :, :], axis=2)
        mins.append(float(d[np.triu_indices(len(pts), k=1)].min()))
    if not mins:
        raise StatsError("no instant with >= 2 co-present pedestrians")
    return _pop_stats(mins)


# ---------------------------------------------------------------------------
# static/dynamic split


@dataclass(frozen=True)
class SplitResult:
    dynamic: list[int]
    static: list[int]
    excluded: list[int]


def split_dynamic(
    trajectories: list[MetricTrajectory],
    pred_window: float,
    threshold: float = DYNAMIC_THRESHOLD_M,
    mode: str = "max",
) -> SplitResult:
    """Partition by displacement within the first ``pred_window`` seconds.

    ``mode`` selects the displacement measure: ``max`` (peak distance from
    the window-start position, robust to loop-backs), ``path`` (arc length),
    or ``endpoint`` (start-to-window-end distance). Trajectories shorter
    than the window are excluded, not classified.
    """
    if mode not in ("max", "path", "endpoint"):
        raise StatsError(f"unknown displacement mode {mode!r}")
    dynamic, static, excluded = [], [], []
    for traj in trajectories:
        t = _times(traj)
        if t[-1] - t[0] + 1e-9 < pred_window:
            excluded.append(traj.ped_id)
            continue
        end = t[0] + pred_window
        p = _xy(traj)
        sel = t <= end + 1e-9
        win = p[sel]
        if mode == "max":
            d = float(np.linalg.norm(win - win[0], axis=1).max())
        elif mode == "path":
            d = float(np.linalg.norm(np.diff(win, axis=0), axis=1).sum())
        else:
            px = np.interp(end, t, p[:, 0])
            py = np.interp(end, t, p[:, 1])
            d = float(np.hypot(px - win[0, 0], py - win[0, 1]))
        (dynamic if d >= threshold else static).append(traj.ped_id)
    return SplitResult(dynamic=dynamic, static=static, excluded=excluded)


# ---------------------------------------------------------------------------
# displacement-error evaluation


@dataclass(frozen=True)
class PredictionCase:
    ped_id: int
    case_id: str
    observation: np.ndarray  # (n_obs, 2)
    ground_truth: np.ndarray  # (n_pred, 2)
    predicted: np.ndarray | None = None  # (n_pred, 2)
    anchor_time: float = 0.0


def _aligned(case: PredictionCase) -> tuple[np.ndarray, np.ndarray]:
    if case.predicted is None:
        raise EvalError(f"case {case.case_id} has no prediction")
    pred = np.asarray(case.predicted, dtype=float)
    gt = np.asarray(case.ground_truth, dtype=float)
    if pred.shape != gt.shape:
        raise EvalError(f"case {case.case_id}: predicted shape {pred.shape} != ground truth {gt.shape}")
    return pred, gt


def ade(case: PredictionCase) -> float:
    """Average displacement error: mean per-step Euclidean error, meters."""
    pred, gt = _aligned(case)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def fde(case: PredictionCase) -> float:
    """Final displacement error: Euclidean error at the last step, meters."""
    pred, gt = _aligned(case)
    return float(np.linalg.norm(pred[-1] - gt[-1]))


def _steps(name: str, duration: float, frequency: float) -> int:
    n = round(duration * frequency)
    if n < 1 or abs(n - duration * frequency) > 1e-6:
        raise EvalError(f"{name}={duration} s is not a positive multiple of the label period 1/{frequency}")
    return int(n)


def enumerate_cases(
    trajectories: list[MetricTrajectory], frequency: float, t_obs: float, t_pred: float, stride: float
) -> list[PredictionCase]:
    """Slide observation+prediction windows over gap-free trajectory spans."""
    n_obs = _steps("t_obs", t_obs, frequency)
    n_pred = _steps("t_pred", t_pred, frequency)
    n_stride = _steps("stride", stride, frequency)
    total = n_obs + n_pred
    cases = []
    for traj in trajectories:
        keyed = {int(round(s[0] * frequency)): (s[1], s[2]) for s in traj.samples}
        ks = sorted(keyed)
        k = ks[0]
        while k + total - 1 <= ks[-1]:
            window = [keyed.get(k + j) for j in range(total)]
            if all(w is not None for w in window):
                arr = np.asarray(window)
                cases.append(
                    PredictionCase(
                        ped_id=traj.ped_id,
                        case_id=f"{traj.ped_id}:{k}",
                        observation=arr[:n_obs],
                        ground_truth=arr[n_obs:],
                        anchor_time=(k + n_obs - 1) / frequency,
                    )
                )
            k += n_stride
    return cases


def write_cv_baseline(cases: list[PredictionCase], path: str, frequency: float, model: str = "cv") -> None:
    """Constant-velocity extrapolation from the last two observed positions."""
    with open(path, "w") as fh:
        for case in cases:
            obs = case.observation
            v = (obs[-1] - obs[-2]) * frequency if len(obs) >= 2 else np.zeros(2)
            for j in range(len(case.ground_truth)):
                p = obs[-1] + v * (j + 1) / frequency
                fh.write(f"{model},{case.case_id},{j},{float(p[0])!r},{float(p[1])!r}\n")


def read_predictions(path: str) -> dict[str, dict[str, dict[int, tuple[float, float]]]]:
    """Parse prediction records: model, case_id, step, x, y."""
    out: dict[str, dict[str, dict[int, tuple[float, float]]]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            model, case_id, step_s, x_s, y_s = parts
            try:
                step, x, y = int(step_s), float(x_s), float(y_s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad step or coordinate") from None
            steps = out.setdefault(model, {}).setdefault(case_id, {})
            if step in steps:
                raise FormatError(f"{path}:{lineno}: duplicate step {step} for {model}/{case_id}")
            steps[step] = (x, y)
    return out


def evaluate_predictions(
    trajectories: list[MetricTrajectory],
    frequency: float,
    prediction_paths: list[str],
    t_obs: float = 3.2,
    t_pred: float = 4.8,
    stride: float | None = None,
    threshold: float = DYNAMIC_THRESHOLD_M,
    mode: str = "max",
) -> dict:
    """Mean ADE/FDE per model, over all cases and over the dynamic subset.

    Every model must cover every enumerated case with steps ``0..n_pred-1``;
    unknown or missing case ids are errors, not silent drops.
    """
    stride = t_pred if stride is None else stride
    cases = enumerate_cases(trajectories, frequency, t_obs, t_pred, stride)
    if not cases:
        raise EvalError("no evaluation windows fit the given trajectories")
    n_pred = len(cases[0].ground_truth)

    segments = [
        MetricTrajectory(
            ped_id=i,
            samples=[(case.anchor_time, case.observation[-1][0], case.observation[-1][1], 0.0)]
            + [
                (case.anchor_time + (j + 1) / frequency, float(p[0]), float(p[1]), 0.0)
                for j, p in enumerate(case.ground_truth)
            ],
        )
        for i, case in enumerate(cases)
    ]
    split = split_dynamic(segments, t_pred, threshold, mode)
    dynamic_idx = set(split.dynamic)

    models: dict[str, dict[str, dict[int, tuple[float, float]]]] = {}
    for path in prediction_paths:
        for model, case_map in read_predictions(path).items():
            merged = models.setdefault(model, {})
            for case_id, steps in case_map.items():
                if case_id in merged:
                    raise EvalError(f"model {model}: case {case_id} appears in multiple files")
                merged[case_id] = steps

    case_ids = {c.case_id for c in cases}
    report_models = {}
    for model in sorted(models):
        unknown = sorted(set(models[model]) - case_ids)
        if unknown:
            raise EvalError(f"model {model}: unresolvable case ids {unknown[:5]}")
        ades, fdes = [], []
        for i, case in enumerate(cases):
            steps = models[model].get(case.case_id)
            if steps is None:
                raise EvalError(f"model {model}: missing case {case.case_id}")
            if sorted(steps) != list(range(n_pred)):
                raise EvalError(f"model {model}, case {case.case_id}: steps must be 0..{n_pred - 1}")
            pred = np.asarray([steps[j] for j in range(n_pred)])
            scored = PredictionCase(
                ped_id=case.ped_id,
                case_id=case.case_id,
                observation=case.observation,
                ground_truth=case.ground_truth,
                predicted=pred,
                anchor_time=case.anchor_time,
            )
            ades.append(ade(scored))
            fdes.append(fde(scored))
        dyn_a = [a for i, a in enumerate(ades) if i in dynamic_idx]
        dyn_f = [f for i, f in enumerate(fdes) if i in dynamic_idx]
        report_models[model] = {
            "ade": float(np.mean(ades)),
            "fde": float(np.mean(fdes)),
            "ade_dynamic": float(np.mean(dyn_a)) if dyn_a else None,
            "fde_dynamic": float(np.mean(dyn_f)) if dyn_f else None,
        }

    return {
        "config": {
            "t_obs_s": t_obs,
            "t_pred_s": t_pred,
            "stride_s": stride,
            "frequency_hz": frequency,
            "dynamic_threshold_m": threshold,
            "displacement_mode": mode,
        },
        "n_cases": len(cases),
        "n_dynamic": len(dynamic_idx),
        "models": report_models,
    }


# ---------------------------------------------------------------------------
# export / import at the label frequency


def _decimation(f_in: float, f_out: float) -> int:
    r = f_in / f_out
    ri = round(r)
    if ri < 1 or abs(r - ri) > 1e-9:
        raise StatsError(f"export frequency {f_out} Hz must evenly divide the label frequency {f_in} Hz")
    return int(ri)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def trajectory_grid_rows(
    traj: MetricTrajectory, f_in: float, f_out: float
) -> list[tuple[int, float, float, float, int]]:
    """Resample one trajectory onto the output grid.

    Returns ``(grid_index, x, y, z, interpolated)`` rows; instants falling in
    a gap between samples are linearly interpolated and flagged.
    """
    r = _decimation(f_in, f_out)
    keyed = {int(round(s[0] * f_in)): s for s in traj.samples}
    ks = sorted(keyed)
    t = np.array([k / f_in for k in ks])
    p = np.array([[keyed[k][1], keyed[k][2], keyed[k][3]] for k in ks])
    rows = []
    for k_out in range(_ceil_div(ks[0], r), ks[-1] // r + 1):
        k_in = k_out * r
        s = keyed.get(k_in)
        if s is not None:
            rows.append((k_out, s[1], s[2], s[3], 0))
        else:
            ti = k_in / f_in
            rows.append(
                (
                    k_out,
                    float(np.interp(ti, t, p[:, 0])),
                    float(np.interp(ti, t, p[:, 1])),
                    float(np.interp(ti, t, p[:, 2])),
                    1,
                )
            )
    return rows


def interpolated_views(session: Session, frequency: float | None = None) -> list[MetricTrajectory]:
    """Gap-filled, optionally decimated trajectories — what export writes."""
    f_in = session.label_frequency
    f_out = frequency if frequency is not None else f_in
    views = []
    for pid in sorted(session.trajectories):
        rows = trajectory_grid_rows(session.trajectories[pid], f_in, f_out)
        if rows:
            views.append(
                MetricTrajectory(
                    ped_id=pid,
                    samples=[(k / f_out, x, y, z) for k, x, y, z, _ in rows],
                    source_tracklets=list(session.trajectories[pid].source_tracklets),
                )
            )
    return views


def export_dataset(session: Session, path: str, frequency: float | None = None) -> dict:
    """Write the released label table: time, ped_id, x, y, interpolated.

    Rows are ordered by (time, ped_id); z is internal and not released.
    Identical sessions produce byte-identical files.
    """
    if not session.trajectories:
        raise StatsError("no metric trajectories to export")
    f_in = session.label_frequency
    f_out = frequency if frequency is not None else f_in
    rows = []
    for pid in sorted(session.trajectories):
        for k, x, y, _z, flag in trajectory_grid_rows(session.trajectories[pid], f_in, f_out):
            rows.append((k, pid, x, y, flag))
    rows.sort(key=lambda row: (row[0], row[1]))
    with open(path, "w") as fh:
        fh.write("time,ped_id,x,y,interpolated\n")
        for k, pid, x, y, flag in rows:
            fh.write(f"{k / f_out!r},{pid},{float(x)!r},{float(y)!r},{flag}\n")
    return {"rows": len(rows), "trajectories": len(session.trajectories), "frequency_hz": f_out, "path": path}


def load_dataset(path: str) -> tuple[list[MetricTrajectory], float]:
    """Read an exported label table back; infers the grid frequency."""
    per_ped: dict[int, list[tuple[float, float, float, float]]] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "time,ped_id,x,y,interpolated":
            raise FormatError(f"{path}:1: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                t, pid, x, y = float(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
                if parts[4] not in ("0", "1"):
                    raise ValueError(f"bad interpolated flag {parts[4]!r}")
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
            per_ped.setdefault(pid, []).append((t, x, y, 0.0))
    if not per_ped:
        raise FormatError(f"{path}: no data rows")
    trajectories = [
        MetricTrajectory(ped_id=pid, samples=sorted(samples)) for pid, samples in sorted(per_ped.items())
    ]
    times = np.unique(np.concatenate([_times(t) for t in trajectories]))
    if len(times) < 2:
        raise FormatError(f"{path}: cannot infer the grid frequency from a single instant")
    g = float(np.diff(times).min())
    f = 1.0 / g
    if abs(f - round(f)) < 1e-6:
        f = float(round(f))
    return trajectories, f


# ---------------------------------------------------------------------------
# the combined report


@dataclass
class StatsReport:
    tracking_duration: tuple[float, float]
    perception_noise: float | None
    motion_speed: tuple[float, float] | None
    min_distance: tuple[float, float] | None
    counts: dict
    methodology: dict
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def pair(v, unit):
            return None if v is None else {"mean": v[0], "std": v[1], "unit": unit}

        return {
            "tracking_duration": pair(self.tracking_duration, "s"),
            "perception_noise": None
            if self.perception_noise is None
            else {"mean": self.perception_noise, "unit": "m/s^2"},
            "motion_speed": pair(self.motion_speed, "m/s"),
            "min_distance": pair(self.min_distance, "m"),
            "counts": self.counts,
            "methodology": self.methodology,
            "notes": self.notes,
        }


METHODOLOGY = {
    "std": "population",
    "positions": "ground-plane (x, y), meters",
    "tracking_duration": "last sample time minus first, per trajectory",
    "perception_noise": "mean central-difference acceleration magnitude over interior samples",
    "motion_speed": "non-overlapping 1 s windows, boundaries linearly interpolated",
    "min_distance": "per-instant minimum pairwise distance, instants with >= 2 pedestrians",
    "gap_fill": "linear interpolation on the label grid, flagged in the export",
    "position_anchor": "bounding-box bottom-center lifted to the ground plane",
}


def compute_stats(
    session: Session | None = None,
    trajectories: list[MetricTrajectory] | None = None,
    frequency: float | None = None,
) -> StatsReport:
    """Full summary report over a session (or a loaded export).

    Session trajectories are viewed gap-filled at the requested frequency so
    the report matches statistics computed on the exported table exactly.
    Metrics whose preconditions fail session-wide are reported as null with
    a note instead of failing the report.
    """
    if session is not None:
        views = interpolated_views(session, frequency)
        f = frequency if frequency is not None else session.label_frequency
    else:
        if trajectories is None or frequency is None:
            raise StatsError("need either a session or trajectories plus a frequency")
        views = list(trajectories)
        f = frequency
    if not views:
        raise StatsError("no trajectories")

    notes = []
    duration = tracking_duration_stats(views)

    eligible = [v for v in views if len(v.samples) >= 3]
    if eligible:
        noise = perception_noise(eligible, 1.0 / f)
        if len(eligible) < len(views):
            notes.append(f"perception_noise: {len(views) - len(eligible)} trajectories with < 3 samples skipped")
    else:
        noise = None
        notes.append("perception_noise: no trajectory with >= 3 samples")

    try:
        speed = motion_speed_stats(views)
    except StatsError as e:
        speed = None
        notes.append(f"motion_speed: {e}")
    try:
        min_dist = min_distance_stats(views, f)
    except StatsError as e:
        min_dist = None
        notes.append(f"min_distance: {e}")

    all_times = np.concatenate([_times(v) for v in views])
    counts = {
        "trajectories": len(views),
        "frames": int(sum(len(v.samples) for v in views)),
        "total_minutes": float((all_times.max() - all_times.min()) / 60.0),
    }
    return StatsReport(
        tracking_duration=duration,
        perception_noise=noise,
        motion_speed=speed,
        min_distance=min_dist,
        counts=counts,
        methodology=dict(METHODOLOGY, frequency_hz=f),
        notes=notes,
    )
