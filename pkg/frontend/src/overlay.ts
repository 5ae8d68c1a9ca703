// Heatmap compositing over raw frames, done on plain RGBA buffers so
// the arithmetic is testable without a rendering backend. The DOM layer
// only copies the result into a canvas.

import type { ExplanationFrame } from "./types.js";

export type RgbaImage = {
  width: number;
  height: number;
  // Row-major RGBA, 4 bytes per pixel.
  data: Uint8ClampedArray;
};

export function makeImage(
  width: number,
  height: number,
  fill: [number, number, number, number] = [0, 0, 0, 255],
): RgbaImage {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let p = 0; p < width * height; p++) {
    data[p * 4] = fill[0];
    data[p * 4 + 1] = fill[1];
    data[p * 4 + 2] = fill[2];
    data[p * 4 + 3] = fill[3];
  }
  return { width, height, data };
}

export function cloneImage(img: RgbaImage): RgbaImage {
  return {
    width: img.width,
    height: img.height,
    data: new Uint8ClampedArray(img.data),
  };
}

// Source-over blend of the heatmap onto the base frame. opacity scales
// the heatmap's own alpha channel; 0 returns the base pixels untouched.
export function blendOverlay(
  base: RgbaImage,
  heat: RgbaImage,
  opacity: number,
): RgbaImage {
  if (base.width !== heat.width || base.height !== heat.height) {
    throw new Error(
      `overlay size ${heat.width}x${heat.height} does not match ` +
        `frame size ${base.width}x${base.height}`,
    );
  }
  if (!(opacity >= 0 && opacity <= 1)) {
    throw new Error(`opacity ${opacity} outside [0, 1]`);
  }
  const out = cloneImage(base);
  for (let p = 0; p < base.width * base.height; p++) {
    const o = p * 4;
    const a = (heat.data[o + 3] / 255) * opacity;
    out.data[o] = Math.round(heat.data[o] * a + base.data[o] * (1 - a));
    out.data[o + 1] = Math.round(heat.data[o + 1] * a + base.data[o + 1] * (1 - a));
    out.data[o + 2] = Math.round(heat.data[o + 2] * a + base.data[o + 2] * (1 - a));
    out.data[o + 3] = base.data[o + 3];
  }
  return out;
}

// Integer nearest-neighbor upscale: source pixel (i, j) becomes the
// factor x factor block at (i * factor, j * factor). Keeping frame and
// heatmap on this same mapping is what guarantees overlay alignment at
// every zoom level.
export function zoomNearest(img: RgbaImage, factor: number): RgbaImage {
  if (!Number.isInteger(factor) || factor < 1) {
    throw new Error(`zoom factor must be a positive integer, got ${factor}`);
  }
  if (factor === 1) return cloneImage(img);
  const width = img.width * factor;
  const height = img.height * factor;
  const data = new Uint8ClampedArray(width * height * 4);
  for (let y = 0; y < height; y++) {
    const srcRow = Math.floor(y / factor) * img.width;
    for (let x = 0; x < width; x++) {
      const src = (srcRow + Math.floor(x / factor)) * 4;
      const dst = (y * width + x) * 4;
      data[dst] = img.data[src];
      data[dst + 1] = img.data[src + 1];
      data[dst + 2] = img.data[src + 2];
      data[dst + 3] = img.data[src + 3];
    }
  }
  return { width, height, data };
}

// The view pipeline: zoom both layers with the same nearest-neighbor
// mapping, then blend. Heatmap pixel (i, j) therefore lands exactly on
// frame pixel (i, j) regardless of zoom.
export function composeFrameView(
  frame: RgbaImage,
  heat: RgbaImage | null,
  opacity: number,
  zoom: number,
): RgbaImage {
  const scaledFrame = zoomNearest(frame, zoom);
  if (heat === null || opacity === 0) return scaledFrame;
  return blendOverlay(scaledFrame, zoomNearest(heat, zoom), opacity);
}

// Legend line for one relevance map. States the evidence score and that
// colors are normalized per map, since raw relevance values are not on
// a shared scale across frames.
export function describeOverlay(frame: ExplanationFrame, className: string): string {
  const score = frame.score.toFixed(4);
  return (
    `relevance toward "${className}": score ${score}; ` +
    `red supports, blue contradicts; ` +
    `colors normalized to this map's own max |relevance|`
  );
}
