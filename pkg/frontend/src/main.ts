import { ApiError, StudioClient } from "./api.js";
import { Point } from "./editops.js";
import { CLASSES } from "./palette.js";
import { decodeMaskPng, drawLabelMap, pngSrc } from "./render.js";
import { CanvasState, needsSync } from "./state.js";

const DEBOUNCE_MS = 250;

const client = new StudioClient();

let state: CanvasState | null = null;
let sessionId: string | null = null;
let originalDrawing = "";
let syncedEdits = 0;          // ops already sent to the service
let inFlight = false;
let pendingSync = false;
let debounceTimer: number | undefined;

const el = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  window.setTimeout(() => box.classList.remove("visible"), 4000);
}

function setBusy(busy: boolean): void {
  el<HTMLDivElement>("spinner").style.visibility = busy ? "visible" : "hidden";
}

function repaintMask(): void {
  if (!state) return;
  drawLabelMap(el<HTMLCanvasElement>("mask-canvas"), state.labels,
               state.width, state.height);
}

function scheduleSync(): void {
  window.clearTimeout(debounceTimer);
  debounceTimer = window.setTimeout(() => void sync(), DEBOUNCE_MS);
}

async function sync(): Promise<void> {
  if (!state || !sessionId) return;
  if (inFlight) {
    pendingSync = true;  // latest request supersedes queued ones
    return;
  }
  if (!needsSync(state, syncedEdits)) return;
  const queued = state.editLog.slice(syncedEdits);
  const poseDirty = state.dirty;
  inFlight = true;
  setBusy(true);
  try {
    let response;
    if (queued.length > 0) {
      response = await client.postEdits(sessionId, queued);
      syncedEdits = state.editLog.length;
      if (poseDirty) {
        response = await client.render(sessionId, state.pose.yaw, state.pose.pitch);
      }
    } else {
      response = await client.render(sessionId, state.pose.yaw, state.pose.pitch);
    }
    state.dirty = false;
    el<HTMLImageElement>("edited-img").src = pngSrc(response.drawing_png_b64);
  } catch (err) {
    if (err instanceof ApiError) {
      toast(`${err.status}: ${err.message}`
            + (err.bounds ? ` (bounds ${JSON.stringify(err.bounds)})` : ""));
    } else {
      toast(String(err));
    }
  } finally {
    inFlight = false;
    setBusy(false);
    if (pendingSync) {
      pendingSync = false;
      scheduleSync();
    }
  }
}

async function newSession(): Promise<void> {
  const ckptId = el<HTMLSelectElement>("style-picker").value;
  const seed = Number(el<HTMLInputElement>("seed-input").value || "0");
  if (!ckptId) {
    toast("no checkpoint selected");
    return;
  }
  setBusy(true);
  try {
    const info = await client.createSession(ckptId, seed);
    sessionId = info.session_id;
    originalDrawing = info.preview_png_b64;
    el<HTMLImageElement>("original-img").src = pngSrc(info.preview_png_b64);
    el<HTMLImageElement>("edited-img").src = pngSrc(info.preview_png_b64);
    const mask = await decodeMaskPng(info.mask_png_b64);
    state = new CanvasState(mask.labels, mask.width, mask.height);
    state.pose = {
      yaw: Number(el<HTMLInputElement>("yaw-slider").value),
      pitch: Number(el<HTMLInputElement>("pitch-slider").value),
    };
    syncedEdits = 0;
    state.dirty = false;
    repaintMask();
  } catch (err) {
    toast(String(err));
  } finally {
    setBusy(false);
  }
}

function canvasPoint(event: PointerEvent): Point {
  const canvas = el<HTMLCanvasElement>("mask-canvas");
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) / rect.width) * (state?.width ?? 1),
    y: ((event.clientY - rect.top) / rect.height) * (state?.height ?? 1),
  };
}

function wirePainting(): void {
  const canvas = el<HTMLCanvasElement>("mask-canvas");
  let path: Point[] = [];
  let painting = false;
  canvas.addEventListener("pointerdown", (e) => {
    if (!state) return;
    painting = true;
    canvas.setPointerCapture(e.pointerId);
    path = [canvasPoint(e)];
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!painting || !state) return;
    path.push(canvasPoint(e));
  });
  canvas.addEventListener("pointerup", () => {
    if (!painting || !state) return;
    painting = false;
    const op = state.paintStroke(path);
    path = [];
    if (op) {
      repaintMask();
      scheduleSync();
    }
  });
}

function wireControls(): void {
  const swatches = el<HTMLDivElement>("swatches");
  for (const entry of CLASSES) {
    const b = document.createElement("button");
    b.className = "swatch";
    b.title = entry.name;
    b.style.background = `rgb(${entry.rgb.join(",")})`;
    b.addEventListener("click", () => {
      if (state) state.brush.classId = entry.id;
      document.querySelectorAll(".swatch").forEach((s) =>
        s.classList.remove("active"));
      b.classList.add("active");
    });
    swatches.appendChild(b);
  }

  el<HTMLInputElement>("radius-slider").addEventListener("input", (e) => {
    if (state) state.brush.radius = Number((e.target as HTMLInputElement).value);
  });

  for (const axis of ["yaw", "pitch"] as const) {
    el<HTMLInputElement>(`${axis}-slider`).addEventListener("input", (e) => {
      if (!state) return;
      state.pose[axis] = Number((e.target as HTMLInputElement).value);
      state.dirty = true;
      scheduleSync();
    });
  }

  el<HTMLButtonElement>("new-session").addEventListener("click",
                                                        () => void newSession());
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    if (!state || !sessionId) return;
    state.undo();
    repaintMask();
    // the service log has diverged; replay the full log server-side
    void client.clearEdits(sessionId).then(() => {
      syncedEdits = 0;
      state!.dirty = true;
      scheduleSync();
    });
  });
  el<HTMLButtonElement>("clear-edits").addEventListener("click", () => {
    if (!state || !sessionId) return;
    state.clearEdits();
    repaintMask();
    void client.clearEdits(sessionId).then((resp) => {
      syncedEdits = 0;
      state!.dirty = false;
      el<HTMLImageElement>("edited-img").src = pngSrc(resp.drawing_png_b64);
    });
  });

  el<HTMLButtonElement>("export").addEventListener("click", () => {
    if (!state) return;
    download("edit-log.json", state.exportLog());
    const edited = el<HTMLImageElement>("edited-img").src;
    const a = document.createElement("a");
    a.href = edited;
    a.download = "drawing.png";
    a.click();
  });

  el<HTMLInputElement>("import-log").addEventListener("change", async (e) => {
    const input = e.target as HTMLInputElement;
    if (!state || !input.files?.length) return;
    state.importLog(await input.files[0].text());
    repaintMask();
    if (sessionId) {
      await client.clearEdits(sessionId);
      syncedEdits = 0;
      state.dirty = true;
      scheduleSync();
    }
    input.value = "";
  });
}

function download(name: string, text: string): void {
  const a = document.createElement("a");
  a.href = URL.createObjectURL(new Blob([text], { type: "application/json" }));
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

async function loadCheckpoints(): Promise<void> {
  const picker = el<HTMLSelectElement>("style-picker");
  try {
    const entries = await client.listCheckpoints();
    picker.innerHTML = "";
    for (const entry of entries) {
      const opt = document.createElement("option");
      opt.value = entry.ckpt_id;
      opt.textContent = `${entry.style_name} (${entry.resolution ?? "?"}px)`;
      picker.appendChild(opt);
    }
  } catch (err) {
    toast(`failed to list checkpoints: ${String(err)}`);
  }
}

void (async () => {
  wireControls();
  wirePainting();
  await loadCheckpoints();
})();

export { originalDrawing };
