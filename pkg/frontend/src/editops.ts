import { NUM_CLASSES } from "./palette.js";

export type EditMode = "set" | "clear";

/** Wire format accepted by POST /api/session/{id}/edit. */
export interface EditOp {
  polygon: [number, number][];
  class: number;
  mode: EditMode;
}

export interface Point {
  x: number;
  y: number;
}

export function validateEditOp(op: EditOp): void {
  if (!Number.isInteger(op.class) || op.class < 0 || op.class >= NUM_CLASSES) {
    throw new Error(`class ${op.class} outside 0..${NUM_CLASSES - 1}`);
  }
  if (op.polygon.length < 3) {
    throw new Error("polygon needs at least 3 points");
  }
}

/**
 * Outline of a brush stroke: a polyline swept by a disc of the given
 * radius, approximated as offset sides plus arc end caps. A single point
 * becomes a regular polygon.
 */
export function capsulePolygon(path: Point[], radius: number,
                               arcSteps = 8): [number, number][] {
  const pts = dedupe(path);
  if (pts.length === 0) return [];
  if (pts.length === 1) {
    const out: [number, number][] = [];
    const c = pts[0];
    const n = Math.max(arcSteps * 2, 8);
    for (let i = 0; i < n; i++) {
      const a = (2 * Math.PI * i) / n;
      out.push([c.x + radius * Math.cos(a), c.y + radius * Math.sin(a)]);
    }
    return out;
  }

  const normals: Point[] = [];
  for (let i = 0; i < pts.length; i++) {
    const prev = pts[Math.max(i - 1, 0)];
    const next = pts[Math.min(i + 1, pts.length - 1)];
    const dx = next.x - prev.x;
    const dy = next.y - prev.y;
    const len = Math.hypot(dx, dy) || 1;
    normals.push({ x: -dy / len, y: dx / len });
  }

  const left: [number, number][] = [];
  const right: [number, number][] = [];
  for (let i = 0; i < pts.length; i++) {
    left.push([pts[i].x + radius * normals[i].x, pts[i].y + radius * normals[i].y]);
    right.push([pts[i].x - radius * normals[i].x, pts[i].y - radius * normals[i].y]);
  }

  const cap = (center: Point, from: Point, sign: number): [number, number][] => {
    const start = Math.atan2(from.y, from.x);
    const out: [number, number][] = [];
    for (let i = 1; i < arcSteps; i++) {
      const a = start + sign * (Math.PI * i) / arcSteps;
      out.push([center.x + radius * Math.cos(a), center.y + radius * Math.sin(a)]);
    }
    return out;
  };

  const last = pts[pts.length - 1];
  const first = pts[0];
  const nLast = normals[normals.length - 1];
  const nFirst = normals[0];
  return [
    ...left,
    ...cap(last, { x: nLast.x, y: nLast.y }, -1),
    ...right.slice().reverse(),
    ...cap(first, { x: -nFirst.x, y: -nFirst.y }, -1),
  ];
}

function dedupe(path: Point[]): Point[] {
  const out: Point[] = [];
  for (const p of path) {
    const prev = out[out.length - 1];
    if (!prev || Math.hypot(p.x - prev.x, p.y - prev.y) > 1e-9) out.push(p);
  }
  return out;
}

/**
 * Even-odd scanline fill at pixel centers. Deterministic, so replaying an
 * edit log reproduces a label map exactly.
 */
export function rasterizePolygon(polygon: [number, number][], width: number,
                                 height: number): Uint8Array {
  const mask = new Uint8Array(width * height);
  if (polygon.length < 3) return mask;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [, y] of polygon) {
    minY = Math.min(minY, y);
    maxY = Math.max(maxY, y);
  }
  const y0 = Math.max(0, Math.floor(minY));
  const y1 = Math.min(height - 1, Math.ceil(maxY));
  for (let row = y0; row <= y1; row++) {
    const yc = row + 0.5;
    const xs: number[] = [];
    for (let i = 0; i < polygon.length; i++) {
      const [ax, ay] = polygon[i];
      const [bx, by] = polygon[(i + 1) % polygon.length];
      if (ay <= yc !== by <= yc) {
        xs.push(ax + ((yc - ay) / (by - ay)) * (bx - ax));
      }
    }
    xs.sort((a, b) => a - b);
    for (let k = 0; k + 1 < xs.length; k += 2) {
      const cStart = Math.max(0, Math.ceil(xs[k] - 0.5));
      const cEnd = Math.min(width - 1, Math.floor(xs[k + 1] - 0.5));
      for (let col = cStart; col <= cEnd; col++) {
        mask[row * width + col] = 1;
      }
    }
  }
  return mask;
}

/** Apply one op to a label map in place; "clear" restores the base map. */
export function applyEditOp(labels: Uint8Array, base: Uint8Array, op: EditOp,
                            width: number, height: number): void {
  validateEditOp(op);
  const region = rasterizePolygon(op.polygon, width, height);
  for (let i = 0; i < labels.length; i++) {
    if (region[i]) {
      labels[i] = op.mode === "set" ? op.class : base[i];
    }
  }
}
