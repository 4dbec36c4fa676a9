import { CLASSES } from "./palette.js";

/** Draw a label map into a canvas, scaled to the canvas size. */
export function drawLabelMap(canvas: HTMLCanvasElement, labels: Uint8Array,
                             width: number, height: number): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = new ImageData(width, height);
  for (let i = 0; i < labels.length; i++) {
    const [r, g, b] = CLASSES[labels[i]]?.rgb ?? [255, 255, 255];
    image.data[4 * i] = r;
    image.data[4 * i + 1] = g;
    image.data[4 * i + 2] = b;
    image.data[4 * i + 3] = 255;
  }
  const off = document.createElement("canvas");
  off.width = width;
  off.height = height;
  off.getContext("2d")!.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

export function pngSrc(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

/** Decode a base64 mask PNG into a label map via an offscreen canvas.
 * Palette PNGs decode to their RGB colors, so colors are mapped back to
 * class ids. */
export async function decodeMaskPng(b64: string):
    Promise<{ labels: Uint8Array; width: number; height: number }> {
  const img = new Image();
  img.src = pngSrc(b64);
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const data = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
  const byColor = new Map<number, number>();
  for (const entry of CLASSES) {
    const [r, g, b] = entry.rgb;
    byColor.set((r << 16) | (g << 8) | b, entry.id);
  }
  const labels = new Uint8Array(canvas.width * canvas.height);
  for (let i = 0; i < labels.length; i++) {
    const key = (data[4 * i] << 16) | (data[4 * i + 1] << 8) | data[4 * i + 2];
    labels[i] = byColor.get(key) ?? 0;
  }
  return { labels, width: canvas.width, height: canvas.height };
}
