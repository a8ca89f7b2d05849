/**
 * 2D exploration pane: landmarks, Delaunay edges, Voronoi cells, hull,
 * cursor and trajectory trace on a plain canvas. Pointer events map to
 * exploration-space coordinates through the inverse view transform.
 */

import type { SpaceManifest } from "./types.js";
import { ViewTransform, boundsOf } from "./viewTransform.js";
import type { ViewState } from "./viewstate.js";

const CELL_COLORS = [
  "#dbeafe", "#dcfce7", "#fef9c3", "#fce7f3", "#e0e7ff",
  "#ccfbf1", "#fee2e2", "#ede9fe", "#ffedd5", "#f1f5f9",
];

export class SpacePane {
  transform: ViewTransform;
  private ctx: CanvasRenderingContext2D;

  onStart: ((landmark: number) => void) | null = null;
  onDrag: ((target: [number, number]) => void) | null = null;
  private dragging = false;

  constructor(
    private canvas: HTMLCanvasElement,
    private manifest: SpaceManifest,
    private state: ViewState,
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas unavailable");
    this.ctx = ctx;
    this.transform = new ViewTransform(
      canvas.width,
      canvas.height,
      boundsOf(manifest.landmarks.map((l) => l.position)),
    );
    canvas.addEventListener("pointerdown", (ev) => this.pointerDown(ev));
    canvas.addEventListener("pointermove", (ev) => this.pointerMove(ev));
    window.addEventListener("pointerup", () => {
      this.dragging = false;
    });
  }

  resize(width: number, height: number): void {
    this.canvas.width = width;
    this.canvas.height = height;
    this.transform.fit(width, height,
      boundsOf(this.manifest.landmarks.map((l) => l.position)));
  }

  private eventSpace(ev: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return this.transform.toSpace(ev.clientX - rect.left, ev.clientY - rect.top);
  }

  private pointerDown(ev: PointerEvent): void {
    const q = this.eventSpace(ev);
    // Click near a landmark starts a session there.
    let best = -1;
    let bestD = Infinity;
    this.manifest.landmarks.forEach((lm, i) => {
      const d = Math.hypot(lm.position[0] - q[0], lm.position[1] - q[1]);
      if (d < bestD) {
        bestD = d;
        best = i;
      }
    });
    const [px, py] = this.transform.toPixel(
      this.manifest.landmarks[best].position[0],
      this.manifest.landmarks[best].position[1],
    );
    const rect = this.canvas.getBoundingClientRect();
    const pixelDist = Math.hypot(px - (ev.clientX - rect.left), py - (ev.clientY - rect.top));
    if (this.state.sessionId === null || pixelDist < 12) {
      this.onStart?.(best);
      this.dragging = false;
      return;
    }
    this.dragging = true;
    this.onDrag?.(q);
  }

  private pointerMove(ev: PointerEvent): void {
    if (!this.dragging) return;
    this.onDrag?.(this.eventSpace(ev));
  }

  draw(): void {
    const { ctx, manifest, transform, state } = this;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);

    manifest.voronoi.forEach((cell, i) => {
      if (cell.length < 3) return;
      ctx.beginPath();
      cell.forEach(([x, y], k) => {
        const [px, py] = transform.toPixel(x, y);
        if (k === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.closePath();
      ctx.fillStyle = CELL_COLORS[i % CELL_COLORS.length];
      ctx.globalAlpha = state.active === i ? 1.0 : 0.55;
      ctx.fill();
      ctx.globalAlpha = 1.0;
      ctx.strokeStyle = "#94a3b8";
      ctx.stroke();
    });

    ctx.strokeStyle = "#cbd5e1";
    for (const [u, v] of manifest.edges) {
      const [ax, ay] = transform.toPixel(...manifest.landmarks[u].position);
      const [bx, by] = transform.toPixel(...manifest.landmarks[v].position);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    }

    if (state.trajectory.length > 1) {
      ctx.strokeStyle = "#16a34a";
      ctx.lineWidth = 2;
      ctx.beginPath();
      state.trajectory.forEach(([x, y], k) => {
        const [px, py] = transform.toPixel(x, y);
        if (k === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
      ctx.lineWidth = 1;
    }

    manifest.landmarks.forEach((lm, i) => {
      const [px, py] = transform.toPixel(...lm.position);
      ctx.beginPath();
      ctx.arc(px, py, i === state.active ? 7 : 5, 0, 2 * Math.PI);
      ctx.fillStyle = i === state.active ? "#2563eb" : "#0f172a";
      ctx.fill();
    });

    if (state.cursor) {
      const [px, py] = transform.toPixel(state.cursor[0], state.cursor[1]);
      ctx.beginPath();
      ctx.arc(px, py, 6, 0, 2 * Math.PI);
      ctx.strokeStyle = "#dc2626";
      ctx.lineWidth = 2;
      ctx.stroke();
      ctx.lineWidth = 1;
    }
  }
}
