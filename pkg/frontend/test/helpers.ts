/** Shared test stand-ins: an in-memory fetch router and canned payloads. */

import type { FetchLike } from "../src/api.js";
import type { OverlayResponse, SessionSummary } from "../src/types.js";

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

type Handler = (body: unknown, path: string) => { status?: number; json: unknown };

export class FakeServer {
  calls: RecordedCall[] = [];
  private routes = new Map<string, Handler>();

  on(method: string, path: string, handler: Handler | unknown): void {
    const h: Handler = typeof handler === "function" ? (handler as Handler) : () => ({ json: handler });
    this.routes.set(`${method} ${path}`, h);
  }

  callsTo(method: string, path: string): RecordedCall[] {
    return this.calls.filter((c) => c.method === method && c.path === path);
  }

  fetch: FetchLike = (url, init) => {
    const method = init?.method ?? "GET";
    const parsed = new URL(url, "http://fake");
    const path = parsed.pathname;
    const body = typeof init?.body === "string" ? (JSON.parse(init.body) as unknown) : undefined;
    this.calls.push({ method, path, body });
    const handler = this.routes.get(`${method} ${path}`);
    if (handler === undefined) {
      return Promise.resolve(jsonResponse(404, { detail: `no route ${method} ${path}` }));
    }
    const out = handler(body, `${path}${parsed.search}`);
    return Promise.resolve(jsonResponse(out.status ?? 200, out.json));
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function cannedSummary(overrides: Partial<SessionSummary> = {}): SessionSummary {
  return {
    session_id: "sess-1",
    path: "/tmp/sess-1",
    head: 0,
    seq: 0,
    label_frequency: 10,
    camera_fps: 30,
    reference_camera: "cam1",
    cameras: ["cam1", "cam2"],
    n_tracklets: 4,
    n_trajectories: 2,
    time_span: [0, 20],
    ...overrides,
  };
}

export function cannedOverlay(overrides: Partial<OverlayResponse> = {}): OverlayResponse {
  return {
    head: 0,
    camera_id: "cam1",
    items: [
      { id: 1, kind: "trajectory", points: [[100, 100], [200, 100]], times: [0, 1] },
      { id: 2, kind: "trajectory", points: [[100, 300], [200, 300]], times: [0, 1] },
      { id: 7, kind: "tracklet", points: [[50, 400], [60, 410]], times: [0, 1] },
    ],
    ...overrides,
  };
}

/** Wires the read-only routes a controller refresh needs. */
export function wireSession(server: FakeServer, summary: SessionSummary): void {
  const id = summary.session_id;
  server.on("POST", "/sessions/open", { ...summary });
  server.on("GET", `/sessions/${id}`, () => ({ json: { ...summary } }));
  server.on("GET", `/sessions/${id}/trajectories`, {
    head: summary.head,
    items: [
      { id: 1, points: [[0, 0, 0], [1, 1, 0]], n_samples: 2 },
      { id: 2, points: [[0, 5, 5], [1, 6, 5]], n_samples: 2 },
    ],
  });
  server.on("GET", `/sessions/${id}/overlay`, cannedOverlay({ head: summary.head }));
  server.on("GET", `/sessions/${id}/progress`, {
    head: summary.head,
    seq: summary.seq,
    action_counts: {},
    n_tracklets: summary.n_tracklets,
    n_trajectories: summary.n_trajectories,
    undone_depth: 0,
  });
}
