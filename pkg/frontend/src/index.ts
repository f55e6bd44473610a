/** Browser bootstrap: wires the DOM shell to a SessionController.
 *
 * Everything here is presentation; all labeling state lives in the
 * controller, and all trajectory content comes from the service.
 */

import { LabelApi } from "./api.js";
import { buildParams, SessionController } from "./controller.js";
import { hitTest, overlayCommands, renderCommands } from "./overlay.js";
import type { EditKind } from "./types.js";

const ACTION_KINDS: EditKind[] = ["Break", "Join", "Delete", "Disentangle", "Relabel", "AddMissing"];

const SHORTCUTS: Record<string, EditKind> = {
  b: "Break",
  j: "Join",
  d: "Delete",
  x: "Disentangle",
  r: "Relabel",
  a: "AddMissing",
};

const NOTICE_LIMIT = 4;

function bootstrap(): void {
  const byId = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (el === null) throw new Error(`missing element #${id}`);
    return el as T;
  };

  const pathInput = byId<HTMLInputElement>("session-path");
  const openButton = byId<HTMLButtonElement>("open");
  const cameraSelect = byId<HTMLSelectElement>("camera");
  const saveButton = byId<HTMLButtonElement>("save");
  const playButton = byId<HTMLButtonElement>("play");
  const scrubber = byId<HTMLInputElement>("scrubber");
  const clock = byId<HTMLSpanElement>("clock");
  const rateSelect = byId<HTMLSelectElement>("rate");
  const canvas = byId<HTMLCanvasElement>("viewport");
  const paramsInput = byId<HTMLInputElement>("params");
  const applyButton = byId<HTMLButtonElement>("apply");
  const undoButton = byId<HTMLButtonElement>("undo");
  const redoButton = byId<HTMLButtonElement>("redo");
  const status = byId<HTMLDivElement>("status");
  const noticesDiv = byId<HTMLDivElement>("notices");

  const maybeCtx = canvas.getContext("2d");
  if (maybeCtx === null) throw new Error("canvas 2d context unavailable");
  const ctx: CanvasRenderingContext2D = maybeCtx;

  const controller = new SessionController(new LabelApi(""));

  function render(): void {
    const view = controller.view;
    const span = controller.summary?.time_span ?? null;
    if (span !== null && span.length === 2) {
      scrubber.min = String(span[0]);
      scrubber.max = String(span[1]);
    }
    scrubber.valueAsNumber = view.currentTime;
    clock.textContent = `${view.currentTime.toFixed(2)} s`;
    playButton.textContent = view.playing ? "Pause" : "Play";

    if (cameraSelect.options.length === 0 && controller.summary !== null) {
      for (const cid of controller.summary.cameras) {
        const opt = document.createElement("option");
        opt.value = cid;
        opt.textContent = cid;
        cameraSelect.appendChild(opt);
      }
    }

    for (const kind of ACTION_KINDS) {
      byId<HTMLButtonElement>(`act-${kind}`).className = view.pending === kind ? "armed" : "";
    }

    ctx.fillStyle = "#111";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (controller.overlay !== null) {
      renderCommands(ctx, overlayCommands(controller.overlay, view.selected, view.currentTime));
    }

    const p = controller.progress;
    const parts = [
      controller.summary === null ? "no session" : controller.summary.session_id,
      `selected [${view.selected.join(", ")}]`,
      view.pending === null ? "no pending action" : `pending ${view.pending}`,
      p === null ? "" : `head ${p.head}, ${p.n_trajectories} trajectories, undone ${p.undone_depth}`,
    ];
    status.textContent = parts.filter((s) => s !== "").join(" | ");

    noticesDiv.replaceChildren(
      ...controller.notices.slice(-NOTICE_LIMIT).map((n) => {
        const line = document.createElement("div");
        line.className = `notice-${n.level}`;
        line.textContent = n.text;
        return line;
      }),
    );
  }

  controller.onChange = render;

  function extraParams(): Record<string, unknown> | null {
    const raw = paramsInput.value.trim();
    if (raw === "") return {};
    try {
      const parsed: unknown = JSON.parse(raw);
      if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
        throw new Error("not an object");
      }
      return parsed as Record<string, unknown>;
    } catch (err) {
      controller.notices.push({ level: "error", text: `bad params JSON: ${String(err)}` });
      render();
      return null;
    }
  }

  async function apply(): Promise<void> {
    const extra = extraParams();
    if (extra === null) return;
    const frequency = controller.summary?.label_frequency ?? 1;
    const ok = await controller.submit(buildParams(controller.view, frequency, extra));
    if (ok) paramsInput.value = "";
  }

  openButton.addEventListener("click", () => {
    cameraSelect.replaceChildren();
    void controller.openFromPath(pathInput.value.trim());
  });
  cameraSelect.addEventListener("input", () => void controller.selectCamera(cameraSelect.value));
  saveButton.addEventListener("click", () => void controller.save());
  applyButton.addEventListener("click", () => void apply());
  undoButton.addEventListener("click", () => void controller.undo());
  redoButton.addEventListener("click", () => void controller.redo());
  for (const kind of ACTION_KINDS) {
    byId<HTMLButtonElement>(`act-${kind}`).addEventListener("click", () => {
      controller.setPending(controller.view.pending === kind ? null : kind);
    });
  }

  scrubber.addEventListener("input", () => void controller.seek(scrubber.valueAsNumber));
  rateSelect.addEventListener("input", () => {
    controller.view.playbackRate = Number(rateSelect.value);
  });
  playButton.addEventListener("click", () => {
    controller.view.playing = !controller.view.playing;
    render();
  });

  canvas.addEventListener("click", (event: MouseEvent) => {
    if (controller.overlay === null) return;
    const rect = canvas.getBoundingClientRect();
    const u = ((event.clientX - rect.left) * canvas.width) / rect.width;
    const v = ((event.clientY - rect.top) * canvas.height) / rect.height;
    const id = hitTest(controller.overlay, u, v);
    if (id !== null) controller.select(id);
  });

  document.addEventListener("keydown", (event: KeyboardEvent) => {
    if (event.target instanceof HTMLInputElement || event.target instanceof HTMLSelectElement) {
      return;
    }
    const kind = SHORTCUTS[event.key];
    if (kind !== undefined) {
      controller.setPending(controller.view.pending === kind ? null : kind);
    } else if (event.key === "u") {
      void controller.undo();
    } else if (event.key === "y") {
      void controller.redo();
    } else if (event.key === "Enter") {
      void apply();
    } else if (event.key === "Escape") {
      controller.view.selected = [];
      controller.setPending(null);
    } else if (event.key === " ") {
      event.preventDefault();
      controller.view.playing = !controller.view.playing;
      render();
    }
  });

  // Playback advances the clock locally each frame; the trajectory window is
  // refetched on a coarse cadence so the server sees a few requests per second
  // at most.
  let lastTick: number | null = null;
  let sinceRefresh = 0;
  function tick(nowMs: number): void {
    const span = controller.summary?.time_span ?? null;
    if (controller.view.playing && span !== null && span.length === 2) {
      const dt = lastTick === null ? 0 : (nowMs - lastTick) / 1000;
      const next = controller.view.currentTime + dt * controller.view.playbackRate;
      controller.view.currentTime = Math.min(span[1]!, next);
      if (next >= span[1]!) controller.view.playing = false;
      sinceRefresh += dt;
      if (sinceRefresh > 0.5) {
        sinceRefresh = 0;
        void controller.refresh();
      }
      render();
    }
    lastTick = nowMs;
    requestAnimationFrame(tick);
  }
  requestAnimationFrame(tick);

  render();
}

if (typeof document !== "undefined") {
  bootstrap();
}
