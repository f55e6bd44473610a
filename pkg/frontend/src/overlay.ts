/** Overlay geometry: polyline draw commands and pixel-space hit testing.
 *
 * Pure data-in/data-out so rendering is testable without a DOM; the canvas
 * walker at the bottom is the only piece that touches a 2D context.
 */

import type { OverlayItem, OverlayResponse } from "./types.js";

export const COLORS = {
  tracklet: "#8a8a8a",
  trajectory: "#3fa7d6",
  selected: "#f9a03f",
  label: "#e8e8e8",
  marker: "#ffffff",
};

export interface PolylineCommand {
  kind: "polyline";
  id: number;
  points: number[][];
  color: string;
  width: number;
}

export interface LabelCommand {
  kind: "label";
  id: number;
  at: number[];
  text: string;
  color: string;
}

export interface MarkerCommand {
  kind: "marker";
  id: number;
  at: number[];
  color: string;
}

export type DrawCommand = PolylineCommand | LabelCommand | MarkerCommand;

/** Linear interpolation of an item's pixel position at time t, or null outside its span. */
export function positionAt(item: OverlayItem, t: number): number[] | null {
  const times = item.times;
  const n = times.length;
  if (n === 0) return null;
  const first = times[0]!;
  const last = times[n - 1]!;
  if (t < first || t > last) return null;
  let i = 1;
  while (i < n && times[i]! < t) i += 1;
  if (i === n) return item.points[n - 1]!;
  const t0 = times[i - 1]!;
  const t1 = times[i]!;
  const a = item.points[i - 1]!;
  const b = item.points[i]!;
  const w = t1 === t0 ? 0 : (t - t0) / (t1 - t0);
  return [a[0]! + (b[0]! - a[0]!) * w, a[1]! + (b[1]! - a[1]!) * w];
}

/** Commands to draw one overlay snapshot: polylines, id labels, time markers. */
export function overlayCommands(
  overlay: OverlayResponse,
  selected: number[],
  currentTime: number,
): DrawCommand[] {
  const commands: DrawCommand[] = [];
  for (const item of overlay.items) {
    if (item.points.length === 0) continue;
    const isSelected = item.kind === "trajectory" && selected.includes(item.id);
    const color = isSelected ? COLORS.selected : COLORS[item.kind];
    commands.push({
      kind: "polyline",
      id: item.id,
      points: item.points,
      color,
      width: isSelected ? 3 : item.kind === "trajectory" ? 2 : 1,
    });
    commands.push({
      kind: "label",
      id: item.id,
      at: item.points[item.points.length - 1]!,
      text: `${item.kind === "trajectory" ? "p" : "t"}${item.id}`,
      color,
    });
    const now = positionAt(item, currentTime);
    if (now !== null) {
      commands.push({ kind: "marker", id: item.id, at: now, color: COLORS.marker });
    }
  }
  return commands;
}

function segmentDistance(p: number[], a: number[], b: number[]): number {
  const vx = b[0]! - a[0]!;
  const vy = b[1]! - a[1]!;
  const wx = p[0]! - a[0]!;
  const wy = p[1]! - a[1]!;
  const c1 = vx * wx + vy * wy;
  const c2 = vx * vx + vy * vy;
  const s = c2 <= 0 ? 0 : Math.max(0, Math.min(1, c1 / c2));
  const dx = p[0]! - (a[0]! + s * vx);
  const dy = p[1]! - (a[1]! + s * vy);
  return Math.hypot(dx, dy);
}

/** Nearest trajectory id within tol pixels of (u, v), or null. */
export function hitTest(overlay: OverlayResponse, u: number, v: number, tol = 8): number | null {
  let best: { id: number; d: number } | null = null;
  for (const item of overlay.items) {
    if (item.kind !== "trajectory") continue;
    for (let i = 0; i < item.points.length; i += 1) {
      const a = item.points[i]!;
      const b = item.points[Math.min(i + 1, item.points.length - 1)]!;
      const d = segmentDistance([u, v], a, b);
      if (d <= tol && (best === null || d < best.d)) best = { id: item.id, d };
    }
  }
  return best === null ? null : best.id;
}

/** Minimal slice of CanvasRenderingContext2D the renderer needs. */
export interface Canvas2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export function renderCommands(ctx: Canvas2D, commands: DrawCommand[]): void {
  for (const cmd of commands) {
    if (cmd.kind === "polyline") {
      ctx.strokeStyle = cmd.color;
      ctx.lineWidth = cmd.width;
      ctx.beginPath();
      const [first, ...rest] = cmd.points;
      if (first === undefined) continue;
      ctx.moveTo(first[0]!, first[1]!);
      for (const p of rest) ctx.lineTo(p[0]!, p[1]!);
      ctx.stroke();
    } else if (cmd.kind === "label") {
      ctx.fillStyle = cmd.color;
      ctx.font = "12px sans-serif";
      ctx.fillText(cmd.text, cmd.at[0]! + 4, cmd.at[1]! - 4);
    } else {
      ctx.fillStyle = cmd.color;
      ctx.beginPath();
      ctx.arc(cmd.at[0]!, cmd.at[1]!, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}
