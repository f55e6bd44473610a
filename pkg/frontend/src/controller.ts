/** Session controller: the only mutable piece between the API client and the view.
 *
 * The controller never derives trajectory content on its own — every refresh
 * pulls the overlay and trajectory windows from the server, so the client
 * stays a pure view over server state. Selection/arity rules are enforced
 * locally before any network call; concurrency conflicts (409) trigger a
 * resync plus a visible notice rather than a retry.
 */

import { ApiError, LabelApi } from "./api.js";
import {
  canSubmit,
  clearSelection,
  initialView,
  submitBlocker,
  toggleSelect,
  type ViewState,
} from "./state.js";
import type {
  EditKind,
  FrameMeta,
  OverlayResponse,
  Progress,
  SessionSummary,
  TrajectoryWindow,
} from "./types.js";

export interface LoggedAction {
  seq: number;
  kind: string;
  params: Record<string, unknown>;
}

export interface Notice {
  level: "info" | "error";
  text: string;
}

const WINDOW_SECONDS = 12;

/** Wire params for the pending action from the current selection and time.
 *
 * Sample-authoring fields (frame_range, samples, camera_id) come in via
 * `extra`; identity and split-point fields come from the view itself.
 */
export function buildParams(
  view: ViewState,
  labelFrequency: number,
  extra: Record<string, unknown> = {},
): Record<string, unknown> {
  const kind = view.pending;
  const frame = Math.round(view.currentTime * labelFrequency);
  const base: Record<string, unknown> = { target: "trajectory", ...extra };
  if (kind === "Break") return { ...base, id: view.selected[0], frame };
  if (kind === "Delete" || kind === "Relabel") return { ...base, id: view.selected[0] };
  if (kind === "Join") return { ...base, id_a: view.selected[0], id_b: view.selected[1] };
  if (kind === "Disentangle") {
    return { ...base, id_a: view.selected[0], id_b: view.selected[1], frame };
  }
  return base;
}

function spanOf(summary: SessionSummary): [number, number] {
  const span = summary.time_span;
  if (span === null || span.length !== 2) return [0, 0];
  return [span[0]!, span[1]!];
}

export class SessionController {
  view: ViewState = initialView();
  summary: SessionSummary | null = null;
  progress: Progress | null = null;
  overlay: OverlayResponse | null = null;
  window: TrajectoryWindow | null = null;
  frameMeta: FrameMeta | null = null;
  cameraId: string | null = null;
  notices: Notice[] = [];
  actionLog: LoggedAction[] = [];
  onChange: (() => void) | null = null;

  constructor(readonly api: LabelApi) {}

  private emit(): void {
    if (this.onChange !== null) this.onChange();
  }

  private notify(level: Notice["level"], text: string): void {
    this.notices.push({ level, text });
    this.emit();
  }

  /** Surfaces the server's own message; anything else is re-thrown. */
  private async surface<T>(op: () => Promise<T>): Promise<T | null> {
    try {
      return await op();
    } catch (err) {
      if (err instanceof ApiError) {
        if (err.status === 409) {
          this.notify("error", `session changed: ${err.detail}`);
          await this.resync();
        } else {
          this.notify("error", err.detail);
        }
        return null;
      }
      throw err;
    }
  }

  async openFromPath(path: string): Promise<void> {
    const summary = await this.surface(() => this.api.open(path));
    if (summary === null) return;
    this.summary = summary;
    this.view = initialView();
    this.view.sessionId = summary.session_id;
    this.view.head = summary.head;
    this.view.currentTime = spanOf(summary)[0];
    this.cameraId = summary.cameras[0] ?? null;
    this.actionLog = [];
    await this.refresh();
  }

  /** Re-pull summary + derived views after any server-side change. */
  async resync(): Promise<void> {
    const id = this.view.sessionId;
    if (id === null) return;
    const summary = await this.api.session(id);
    this.summary = summary;
    this.view.head = summary.head;
    this.view = clearSelection(this.view);
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const id = this.view.sessionId;
    if (id === null || this.summary === null) return;
    const [lo, hi] = spanOf(this.summary);
    if (hi <= lo) {
      this.emit();
      return;
    }
    const at = Math.min(hi, Math.max(lo, this.view.currentTime));
    const t0 = Math.max(lo, at - WINDOW_SECONDS / 2);
    const t1 = Math.min(hi, t0 + WINDOW_SECONDS);
    this.window = await this.api.trajectories(id, t0, t1);
    if (this.cameraId !== null) {
      this.overlay = await this.api.overlay(id, this.cameraId, t0, t1);
    }
    this.progress = await this.api.progress(id);
    this.emit();
  }

  async seek(time: number): Promise<void> {
    if (this.summary === null) return;
    const [lo, hi] = spanOf(this.summary);
    this.view.currentTime = Math.min(hi, Math.max(lo, time));
    await this.refresh();
  }

  async selectCamera(cameraId: string): Promise<void> {
    this.cameraId = cameraId;
    await this.refresh();
  }

  select(id: number): void {
    this.view = toggleSelect(this.view, id);
    this.emit();
  }

  setPending(kind: EditKind | null): void {
    this.view.pending = kind;
    this.emit();
  }

  /** Arity/selection invariant is checked here, before any network I/O. */
  async submit(params: Record<string, unknown>): Promise<boolean> {
    const kind = this.view.pending;
    if (kind === null || !canSubmit(this.view)) {
      this.notify("error", submitBlocker(this.view) ?? "nothing to submit");
      return false;
    }
    const id = this.view.sessionId;
    if (id === null) return false;
    const result = await this.surface(() =>
      this.api.edit(id, this.view.head, kind, params),
    );
    if (result === null) return false;
    this.actionLog.push({ seq: result.seq, kind, params });
    this.view.head = result.head;
    this.view = clearSelection(this.view);
    await this.refresh();
    return true;
  }

  async undo(): Promise<boolean> {
    const id = this.view.sessionId;
    if (id === null) return false;
    const result = await this.surface(() => this.api.undo(id, this.view.head));
    if (result === null) return false;
    this.actionLog.push({ seq: result.seq, kind: "Undo", params: {} });
    this.view.head = result.head;
    this.view = clearSelection(this.view);
    await this.refresh();
    return true;
  }

  async redo(): Promise<boolean> {
    const id = this.view.sessionId;
    if (id === null) return false;
    const result = await this.surface(() => this.api.redo(id, this.view.head));
    if (result === null) return false;
    this.actionLog.push({ seq: result.seq, kind: "Redo", params: {} });
    this.view.head = result.head;
    this.view = clearSelection(this.view);
    await this.refresh();
    return true;
  }

  async save(): Promise<void> {
    const id = this.view.sessionId;
    if (id === null) return;
    const saved = await this.surface(() => this.api.save(id));
    if (saved !== null) this.notify("info", `saved to ${saved.path}`);
  }
}
