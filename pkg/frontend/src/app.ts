/**
 * Browser wiring for the annotator. Everything stateful lives in
 * AnnotationSession; this file only routes DOM events into it and blits the
 * rendered view onto a canvas. Runs entirely client side from a static page.
 */

import { Point } from "./brush.js";
import { AnnotationSession } from "./session.js";
import { renderToRgba, screenToImage } from "./view.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

let session: AnnotationSession | null = null;
let stroke: Point[] | null = null;

const canvas = byId<HTMLCanvasElement>("canvas");
const ctx = canvas.getContext("2d")!;
const status = byId<HTMLSpanElement>("status");
const fileInput = byId<HTMLInputElement>("file");
const radiusInput = byId<HTMLInputElement>("radius");
const modePaint = byId<HTMLInputElement>("mode-paint");
const windowInput = byId<HTMLInputElement>("window");
const levelInput = byId<HTMLInputElement>("level");

function redraw(): void {
  if (!session) return;
  const rgba = renderToRgba(session.image, session.mask, session.view);
  canvas.width = session.width;
  canvas.height = session.height;
  const frame = ctx.createImageData(session.width, session.height);
  frame.data.set(rgba);
  const scale = session.view.zoom;
  canvas.style.width = `${session.width * scale}px`;
  canvas.style.height = `${session.height * scale}px`;
  ctx.putImageData(frame, 0, 0);
  status.textContent =
    `${session.inputName} ${session.width}x${session.height} | ` +
    `${session.mask.popcount()} px marked | zoom ${scale.toFixed(2)}`;
}

function pointerToImage(ev: PointerEvent): Point {
  const rect = canvas.getBoundingClientRect();
  // Canvas CSS size already includes the zoom; pan is scroll-position based.
  const view = session!.view;
  return screenToImage(
    { ...view, panX: 0, panY: 0 },
    ((ev.clientX - rect.left) / rect.width) * session!.width * view.zoom,
    ((ev.clientY - rect.top) / rect.height) * session!.height * view.zoom,
  );
}

function syncBrush(): void {
  if (!session) return;
  session.brush = {
    radius: Math.max(0, Number(radiusInput.value) || 0),
    mode: modePaint.checked ? "paint" : "erase",
  };
}

function syncWindowLevel(): void {
  if (!session) return;
  const full = session.bitDepth === 16 ? 65536 : 256;
  session.view.windowWidth = (Number(windowInput.value) / 100) * full;
  session.view.windowCenter = (Number(levelInput.value) / 100) * full;
  redraw();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const bytes = new Uint8Array(await file.arrayBuffer());
    session = await AnnotationSession.fromPng(bytes, file.name);
    syncBrush();
    syncWindowLevel();
  } catch (err) {
    status.textContent = String(err);
    session = null;
  }
  redraw();
});

canvas.addEventListener("pointerdown", (ev) => {
  if (!session || ev.button !== 0) return;
  canvas.setPointerCapture(ev.pointerId);
  syncBrush();
  stroke = [pointerToImage(ev)];
  session.paintStroke(stroke);
  // The stroke keeps growing while the pointer is down; replace the entry
  // so the whole drag undoes as one step.
  session.undo();
  session.paintStroke(stroke);
  redraw();
});

canvas.addEventListener("pointermove", (ev) => {
  if (!session || !stroke) return;
  stroke.push(pointerToImage(ev));
  session.undo();
  session.paintStroke(stroke);
  redraw();
});

canvas.addEventListener("pointerup", () => {
  stroke = null;
});

canvas.addEventListener("wheel", (ev) => {
  if (!session) return;
  ev.preventDefault();
  const factor = ev.deltaY < 0 ? 1.25 : 0.8;
  session.view.zoom = Math.min(32, Math.max(0.25, session.view.zoom * factor));
  redraw();
});

document.addEventListener("keydown", (ev) => {
  if (!session) return;
  const key = ev.key.toLowerCase();
  if ((ev.ctrlKey || ev.metaKey) && key === "z" && !ev.shiftKey) {
    session.undo();
    redraw();
    ev.preventDefault();
  } else if ((ev.ctrlKey || ev.metaKey) && (key === "y" || (key === "z" && ev.shiftKey))) {
    session.redo();
    redraw();
    ev.preventDefault();
  }
});

byId<HTMLButtonElement>("undo").addEventListener("click", () => {
  session?.undo();
  redraw();
});

byId<HTMLButtonElement>("redo").addEventListener("click", () => {
  session?.redo();
  redraw();
});

byId<HTMLButtonElement>("export").addEventListener("click", async () => {
  if (!session) return;
  const bytes = await session.exportMask();
  const url = URL.createObjectURL(new Blob([new Uint8Array(bytes)], { type: "image/png" }));
  const a = document.createElement("a");
  a.href = url;
  a.download = session.maskFileName();
  a.click();
  URL.revokeObjectURL(url);
});

radiusInput.addEventListener("input", syncBrush);
modePaint.addEventListener("change", syncBrush);
byId<HTMLInputElement>("mode-erase").addEventListener("change", syncBrush);
windowInput.addEventListener("input", syncWindowLevel);
levelInput.addEventListener("input", syncWindowLevel);
