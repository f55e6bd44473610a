/** Wire types of the labeling service HTTP API. */

export type EditKind = "Break" | "Join" | "Delete" | "Disentangle" | "Relabel" | "AddMissing";

export interface SessionSummary {
  session_id: string;
  path: string;
  head: number;
  seq: number;
  label_frequency: number;
  camera_fps: number;
  reference_camera: string;
  cameras: string[];
  n_tracklets: number;
  n_trajectories: number;
  /** [earliest, latest] sample time in seconds, or null for an empty session. */
  time_span: number[] | null;
}

export interface MutationResponse {
  head: number;
  seq: number;
  target: string;
  created: number[];
  retired: number[];
  changed: number[];
}

export interface Progress {
  head: number;
  seq: number;
  action_counts: Record<string, number>;
  n_tracklets: number;
  n_trajectories: number;
  undone_depth: number;
}

export interface TrajectoryItem {
  id: number;
  /** [time, x, y] triples, decimated server-side. */
  points: number[][];
  n_samples: number;
}

export interface TrajectoryWindow {
  head: number;
  items: TrajectoryItem[];
}

export interface OverlayItem {
  id: number;
  kind: "tracklet" | "trajectory";
  /** [u, v] pixel pairs. */
  points: number[][];
  times: number[];
}

export interface OverlayResponse {
  head: number;
  camera_id: string;
  items: OverlayItem[];
}

export interface BoxOut {
  tracklet_id: number;
  u_min: number;
  v_min: number;
  u_max: number;
  v_max: number;
  source: string;
}

export interface FrameMeta {
  camera_id: string;
  frame: number;
  time: number | null;
  boxes: BoxOut[];
}

export interface SaveResponse {
  saved: boolean;
  path: string;
}
