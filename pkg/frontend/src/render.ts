// Canvas drawing for the two simulation kinds. Box worlds map their bounds
// rectangle onto the canvas; planetary systems get an orthographic top-down
// view auto-scaled to the current positions. World y points up, screen y
// points down, so every transform flips.

import type { BoxSpecEntry, PlanetSpecEntry, WorldStore } from "./store.js";

// the subset of CanvasRenderingContext2D the renderer touches, so tests can
// hand in a recording stub instead of a real canvas
export interface Canvas2D {
  canvas: { width: number; height: number };
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  textAlign: string;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, start: number, end: number): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

const BACKGROUND = "#10141a";
const PLACEHOLDER = "#6a7280";
const TEXT = "#c9d2dd";
const MARGIN = 24;
const MIN_DOT_PX = 2.5;

function rgb(color: [number, number, number]): string {
  return `rgb(${color[0]},${color[1]},${color[2]})`;
}

export function draw(ctx: Canvas2D, store: WorldStore): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  ctx.fillStyle = BACKGROUND;
  ctx.fillRect(0, 0, w, h);

  if (store.notice !== null) {
    ctx.fillStyle = TEXT;
    ctx.font = "14px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(store.notice, w / 2, 24);
  }
  const spec = store.spec;
  if (spec === null) {
    if (store.notice === null) {
      ctx.fillStyle = PLACEHOLDER;
      ctx.font = "14px system-ui, sans-serif";
      ctx.textAlign = "center";
      ctx.fillText("no group watched", w / 2, h / 2);
    }
    return;
  }

  if (spec.kind === "box_world") {
    drawBoxWorld(ctx, store, spec.bounds, w, h);
  } else {
    drawPlanets(ctx, store, w, h);
  }

  ctx.fillStyle = TEXT;
  ctx.font = "12px system-ui, sans-serif";
  ctx.textAlign = "left";
  ctx.fillText(`${store.group ?? ""}  tick ${store.tick < 0 ? "-" : store.tick}`, 8, h - 8);
}

function drawBoxWorld(
  ctx: Canvas2D,
  store: WorldStore,
  bounds: [number, number, number, number],
  w: number,
  h: number,
): void {
  const [minX, minY, maxX, maxY] = bounds;
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);
  const scale = Math.min((w - 2 * MARGIN) / spanX, (h - 2 * MARGIN) / spanY);
  const offX = (w - spanX * scale) / 2;
  const offY = (h - spanY * scale) / 2;
  const toX = (x: number) => offX + (x - minX) * scale;
  const toY = (y: number) => h - offY - (y - minY) * scale;

  ctx.strokeStyle = PLACEHOLDER;
  ctx.lineWidth = 1;
  ctx.strokeRect(toX(minX), toY(maxY), spanX * scale, spanY * scale);

  for (const entity of store.entities) {
    const pos = entity.position;
    const x = pos[0];
    const y = pos[1];
    if (x === undefined || y === undefined) {
      continue;
    }
    const entry = store.specById.get(entity.id) as BoxSpecEntry | undefined;
    // a box the spec table has not caught up with yet renders as a gray
    // unit square until the re-fetch lands
    const hx = entry !== undefined ? entry.half_extents[0] : 0.5;
    const hy = entry !== undefined ? entry.half_extents[1] : 0.5;
    ctx.fillStyle = entry !== undefined ? rgb(entry.color) : PLACEHOLDER;
    ctx.fillRect(toX(x - hx), toY(y + hy), 2 * hx * scale, 2 * hy * scale);
  }
}

function drawPlanets(ctx: Canvas2D, store: WorldStore, w: number, h: number): void {
  let extent = 1e-9;
  for (const entity of store.entities) {
    const x = entity.position[0];
    const y = entity.position[1];
    if (x === undefined || y === undefined) {
      continue;
    }
    extent = Math.max(extent, Math.abs(x), Math.abs(y));
  }
  const scale = (Math.min(w, h) / 2 - MARGIN) / extent;
  const cx = w / 2;
  const cy = h / 2;

  for (const entity of store.entities) {
    const x = entity.position[0];
    const y = entity.position[1];
    if (x === undefined || y === undefined) {
      continue;
    }
    const sx = cx + x * scale;
    const sy = cy - y * scale;
    const entry = store.specById.get(entity.id) as PlanetSpecEntry | undefined;
    const radius =
      entry !== undefined ? Math.max(entry.display_radius * scale, MIN_DOT_PX) : MIN_DOT_PX;
    ctx.fillStyle = entry !== undefined ? rgb(entry.color) : PLACEHOLDER;
    ctx.beginPath();
    ctx.arc(sx, sy, Math.min(radius, Math.min(w, h) / 6), 0, 2 * Math.PI);
    ctx.fill();
    if (entry !== undefined) {
      ctx.fillStyle = TEXT;
      ctx.font = "11px system-ui, sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(entry.label, sx, sy + Math.min(radius, Math.min(w, h) / 6) + 12);
    }
  }
}
