/** Thin typed client over the labeling service; the only network code in the app. */

import type {
  EditKind,
  FrameMeta,
  MutationResponse,
  OverlayResponse,
  Progress,
  SaveResponse,
  SessionSummary,
  TrajectoryWindow,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Non-2xx response, carrying the server's verbatim detail message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parseDetail(response: Response): Promise<string> {
  const text = await response.text();
  try {
    const body = JSON.parse(text) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return text;
  } catch {
    return text;
  }
}

export class LabelApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) throw new ApiError(response.status, await parseDetail(response));
    return (await response.json()) as T;
  }

  open(path: string): Promise<SessionSummary> {
    return this.request("POST", "/sessions/open", { path });
  }

  session(id: string): Promise<SessionSummary> {
    return this.request("GET", `/sessions/${id}`);
  }

  edit(id: string, clientSeq: number, kind: EditKind, params: Record<string, unknown>): Promise<MutationResponse> {
    return this.request("POST", `/sessions/${id}/edits`, { client_seq: clientSeq, kind, params });
  }

  undo(id: string, clientSeq: number): Promise<MutationResponse> {
    return this.request("POST", `/sessions/${id}/undo`, { client_seq: clientSeq });
  }

  redo(id: string, clientSeq: number): Promise<MutationResponse> {
    return this.request("POST", `/sessions/${id}/redo`, { client_seq: clientSeq });
  }

  progress(id: string): Promise<Progress> {
    return this.request("GET", `/sessions/${id}/progress`);
  }

  save(id: string): Promise<SaveResponse> {
    return this.request("POST", `/sessions/${id}/save`);
  }

  trajectories(id: string, t0: number, t1: number, resolution?: number): Promise<TrajectoryWindow> {
    const extra = resolution === undefined ? "" : `&resolution=${resolution}`;
    return this.request("GET", `/sessions/${id}/trajectories?t0=${t0}&t1=${t1}${extra}`);
  }

  overlay(id: string, cameraId: string, t0: number, t1: number, resolution?: number): Promise<OverlayResponse> {
    const extra = resolution === undefined ? "" : `&resolution=${resolution}`;
    return this.request(
      "GET",
      `/sessions/${id}/overlay?camera_id=${encodeURIComponent(cameraId)}&t0=${t0}&t1=${t1}${extra}`,
    );
  }

  frameMeta(id: string, cameraId: string, frame: number): Promise<FrameMeta> {
    return this.request("GET", `/sessions/${id}/cameras/${encodeURIComponent(cameraId)}/frames/${frame}/meta`);
  }

  /** URL of the frame image; the <img> element does the fetching. */
  frameImageUrl(id: string, cameraId: string, frame: number): string {
    return `${this.baseUrl}/sessions/${id}/cameras/${encodeURIComponent(cameraId)}/frames/${frame}`;
  }
}
