import { EditOp, Point, applyEditOp, capsulePolygon } from "./editops.js";

export interface Brush {
  classId: number;
  radius: number;
  mode: "set" | "clear";
}

export interface Pose {
  yaw: number;
  pitch: number;
}

/**
 * Client-side canvas state. The displayed label map is always exactly
 * replay(base, editLog): strokes rasterize through the same polygon path
 * that is queued for the service, so local painting and log replay agree
 * byte for byte.
 */
export class CanvasState {
  readonly width: number;
  readonly height: number;
  readonly base: Uint8Array;
  labels: Uint8Array;
  editLog: EditOp[] = [];
  brush: Brush = { classId: 1, radius: 6, mode: "set" };
  pose: Pose = { yaw: 0, pitch: 0 };
  dirty = false;

  constructor(base: Uint8Array, width: number, height: number) {
    if (base.length !== width * height) {
      throw new Error("base map size mismatch");
    }
    this.width = width;
    this.height = height;
    this.base = Uint8Array.from(base);
    this.labels = Uint8Array.from(base);
  }

  /** Rasterize a stroke immediately and queue its polygon op. Returns the
   * op, or null for an empty stroke. */
  paintStroke(path: Point[]): EditOp | null {
    const polygon = capsulePolygon(path, this.brush.radius);
    if (polygon.length < 3) return null;
    const op: EditOp = {
      polygon,
      class: this.brush.classId,
      mode: this.brush.mode,
    };
    applyEditOp(this.labels, this.base, op, this.width, this.height);
    this.editLog.push(op);
    this.dirty = true;
    return op;
  }

  /** Drop the last stroke and rebuild the map from the log. */
  undo(): void {
    if (this.editLog.length === 0) return;
    this.editLog.pop();
    this.labels = replay(this.base, this.editLog, this.width, this.height);
    this.dirty = true;
  }

  clearEdits(): void {
    this.editLog = [];
    this.labels = Uint8Array.from(this.base);
    this.dirty = true;
  }

  exportLog(): string {
    return JSON.stringify({ edits: this.editLog });
  }

  importLog(payload: string): void {
    const parsed = JSON.parse(payload) as { edits: EditOp[] };
    this.editLog = [];
    this.labels = Uint8Array.from(this.base);
    for (const op of parsed.edits) {
      applyEditOp(this.labels, this.base, op, this.width, this.height);
      this.editLog.push(op);
    }
    this.dirty = true;
  }
}

export function replay(base: Uint8Array, log: EditOp[], width: number,
                       height: number): Uint8Array {
  const labels = Uint8Array.from(base);
  for (const op of log) {
    applyEditOp(labels, base, op, width, height);
  }
  return labels;
}

/** True when a render round trip is warranted: queued strokes the service
 * has not seen, or a pose change. Clean state never triggers traffic. */
export function needsSync(state: CanvasState, syncedEdits: number): boolean {
  return state.editLog.length > syncedEdits || state.dirty;
}
