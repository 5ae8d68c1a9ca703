// Browser entry point. The service base URL and operator id come from
// the page URL (?service=...&operator=...) so a deployment is just a
// static file plus a reachable service.

import { ConsoleApi } from "./api.js";
import { ConsoleApp } from "./app.js";
import type { RgbaImage } from "./overlay.js";

// Decode a base64 PNG through the browser's image pipeline into the
// raw RGBA buffer the compositor works on.
export async function decodePngBrowser(pngBase64: string): Promise<RgbaImage> {
  const img = new Image();
  img.src = `data:image/png;base64,${pngBase64}`;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");
  ctx.drawImage(img, 0, 0);
  const pixels = ctx.getImageData(0, 0, canvas.width, canvas.height);
  return { width: pixels.width, height: pixels.height, data: pixels.data };
}

export function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "http://localhost:8000";
  const operator = params.get("operator") ?? "operator";
  const root = document.getElementById("console-root");
  if (!root) throw new Error("missing #console-root element");
  const app = new ConsoleApp(root, {
    api: new ConsoleApi(base),
    decode: decodePngBrowser,
    operator,
  });
  void app.start();
}

if (typeof document !== "undefined" && document.getElementById("console-root")) {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", boot);
  } else {
    boot();
  }
}
